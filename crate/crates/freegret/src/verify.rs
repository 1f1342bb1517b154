//! Named property suites behind `verify`: each suite replays the library's
//! inequality contracts on seeded inputs and reports per-property pass/fail
//! with the worst observed slack.

use crate::adversary::{gradient_cap, scan_warmup, Adversary, DriftClose, Phase};
use crate::core::{check_shadow_increment, check_state_invariants, norm, update_state, LearnerState, Point};
use crate::harness::{run, ExperimentConfig, GaussianStream, HarnessError};
use crate::learner::{ftrl_argmin_oracle, predict, FtrlLearner, OnlineLearner};
use crate::regularizers::{check_adaptive_conditions, h, h_inv, PhiProfile, RadialPhi, RegularizerSpec};

pub const SUITES: &[&str] = &["recursions", "regularizers", "oracle", "bounds", "adversary"];

#[derive(Debug, Clone, serde::Serialize)]
pub struct PropertyResult {
    pub name: String,
    pub pass: bool,
    pub worst_slack: f64,
    pub detail: String,
}

struct Collector {
    results: Vec<PropertyResult>,
}

impl Collector {
    fn new() -> Self {
        Collector { results: Vec::new() }
    }

    fn add(&mut self, name: &str, pass: bool, worst_slack: f64, detail: String) {
        self.results.push(PropertyResult {
            name: name.into(),
            pass,
            worst_slack,
            detail,
        });
    }
}

fn spec_grid() -> Vec<RegularizerSpec> {
    let mut specs = Vec::new();
    for k in [1.0, 5f64.sqrt(), 5.0] {
        for gamma in [0.6, 0.75, 1.0] {
            specs.push(RegularizerSpec::new(k, gamma).expect("valid grid"));
        }
    }
    specs
}

/// Runs one named suite. Unknown names are a config error.
pub fn run_suite(suite: &str, seed: u64) -> Result<Vec<PropertyResult>, HarnessError> {
    match suite {
        "recursions" => Ok(recursions_suite(seed)),
        "regularizers" => Ok(regularizers_suite()),
        "oracle" => Ok(oracle_suite(seed, 20, 60)),
        "bounds" => Ok(bounds_suite(seed)),
        "adversary" => Ok(adversary_suite(seed)),
        other => Err(HarnessError::Config(format!(
            "unknown suite `{other}` (expected one of {SUITES:?} or `all`)"
        ))),
    }
}

fn recursions_suite(seed: u64) -> Vec<PropertyResult> {
    let mut c = Collector::new();
    let mut worst = f64::INFINITY;
    let mut all = true;
    let mut shadow_worst = f64::INFINITY;
    let mut shadow_all = true;
    let mut stream = GaussianStream::new(seed);
    let mut checks = 0u64;
    for (si, dim) in [(0usize, 1usize), (1, 5), (2, 20), (3, 1), (4, 5), (5, 20)] {
        // Scales spanning 1e-3..1e3, constant per sequence.
        let scale = 10f64.powf(-3.0 + 6.0 * (si as f64) / 5.0);
        let mut state = LearnerState::new(dim);
        for _ in 0..1000 {
            let g = Point::new((0..dim).map(|_| scale * stream.next_gaussian()).collect())
                .expect("finite");
            let (next, delta) = update_state(&state, &g).expect("dims match");
            for chk in check_state_invariants(&state, &next) {
                worst = worst.min(chk.slack);
                all &= chk.pass;
                checks += 1;
            }
            for chk in check_shadow_increment(&state, &next, &delta) {
                shadow_worst = shadow_worst.min(chk.slack);
                shadow_all &= chk.pass;
            }
            state = next;
        }
    }
    c.add(
        "state invariants on random sequences",
        all,
        worst,
        format!("{checks} checks over d in {{1,5,20}}, T=1000, scales 1e-3..1e3"),
    );
    c.add(
        "shadow increment inequalities (two-sided + rate cap)",
        shadow_all,
        shadow_worst,
        "same sequences".into(),
    );

    // Exact scale covariance under power-of-two rescaling.
    let mut cov_ok = true;
    let gs: Vec<f64> = (0..50).map(|_| stream.next_gaussian()).collect();
    for c2 in [1024.0, 0.0078125] {
        let mut a_state = LearnerState::new(1);
        let mut b_state = LearnerState::new(1);
        for &g in &gs {
            a_state = update_state(&a_state, &Point::scalar(g).expect("finite"))
                .expect("scalar")
                .0;
            b_state = update_state(&b_state, &Point::scalar(g * c2).expect("finite"))
                .expect("scalar")
                .0;
            cov_ok &= b_state.a == a_state.a;
            cov_ok &= b_state.inv_eta() == a_state.inv_eta() * c2;
        }
    }
    c.add(
        "scale covariance exact under power-of-two rescaling",
        cov_ok,
        if cov_ok { 0.0 } else { -1.0 },
        "a invariant, 1/eta scales by c".into(),
    );
    c.results
}

fn regularizers_suite() -> Vec<PropertyResult> {
    let mut c = Collector::new();
    let grid = [0.0, 1e-3, 1e-1, 1.0, 10.0, 1e3, 1e6];
    for gamma in [0.55, 0.6, 0.75, 0.9, 1.0] {
        let p = PhiProfile::new(gamma);
        let report = check_adaptive_conditions(&p, &grid);
        let worst = report
            .checks
            .iter()
            .map(|chk| -chk.worst_violation)
            .fold(0.0f64, f64::min);
        c.add(
            &format!("adaptive-regularizer conditions (gamma={gamma})"),
            report.all_pass(),
            worst,
            report
                .checks
                .iter()
                .filter(|chk| !chk.pass)
                .map(|chk| chk.name.clone())
                .collect::<Vec<_>>()
                .join("; "),
        );

        // Envelope bounds (1/2) x log^g(x+1) <= phi(x) <= x log^g(x+1).
        let mut env_worst = f64::INFINITY;
        let mut env_ok = true;
        for &x in &grid[1..] {
            let v = p.phi(x).expect("nonnegative");
            let l = x.ln_1p().powf(gamma);
            let lo = 0.5 * x * l;
            let hi = x * l;
            let slack = ((v - lo) / hi.max(1e-300)).min((hi - v) / hi.max(1e-300));
            env_worst = env_worst.min(slack);
            env_ok &= slack >= -1e-9;
        }
        c.add(
            &format!("phi envelope bounds (gamma={gamma})"),
            env_ok,
            env_worst,
            "checked on the verification grid".into(),
        );
    }

    // Central differences of phi match phi' away from zero.
    let mut fd_worst = f64::INFINITY;
    let mut fd_ok = true;
    for gamma in [0.6, 0.75, 1.0] {
        let p = PhiProfile::new(gamma);
        for x in [0.5, 2.0, 25.0, 400.0, 1e4] {
            let step = 1e-6 * (1.0 + x);
            let fd = (p.phi(x + step).unwrap() - p.phi(x - step).unwrap()) / (2.0 * step);
            let exact = p.phi_prime(x).unwrap();
            let slack = 1e-6 - (fd - exact).abs() / exact.max(1e-3);
            fd_worst = fd_worst.min(slack);
            fd_ok &= slack >= 0.0;
        }
    }
    c.add(
        "phi' matches central differences of phi",
        fd_ok,
        fd_worst,
        "relative 1e-6 away from zero".into(),
    );

    // h round-trips through its inverse.
    let mut rt_worst = f64::INFINITY;
    let mut rt_ok = true;
    for gamma in [0.6, 0.75, 1.0] {
        let p = PhiProfile::new(gamma);
        for y in [0.1, 1.0, 10.0] {
            match h_inv(&p, y) {
                Ok(x) => {
                    let back = h(&p, x).expect("nonnegative");
                    let slack = 1e-8 - (back - y).abs() / y;
                    rt_worst = rt_worst.min(slack);
                    rt_ok &= slack >= 0.0;
                }
                Err(_) => {
                    // Out of floating range for this gamma; the log-domain
                    // payload is covered by unit tests.
                }
            }
        }
    }
    c.add(
        "h / h_inv round trip",
        rt_ok,
        rt_worst,
        "relative 1e-8 where representable".into(),
    );
    c.results
}

/// Oracle equivalence over the (k, gamma) grid on seeded random sequences.
pub fn oracle_suite(seed: u64, sequences: usize, rounds: usize) -> Vec<PropertyResult> {
    let mut c = Collector::new();
    let specs = spec_grid();
    let mut stream = GaussianStream::new(seed);
    let mut worst = f64::INFINITY;
    let mut all = true;
    let mut comparisons = 0u64;
    for si in 0..sequences {
        let dim = [1usize, 5, 20][si % 3];
        // Per-sequence scale log-uniform in 1e-2..1e2.
        let scale = 10f64.powf(-2.0 + 4.0 * ((si as f64) + 0.5) / sequences as f64);
        let gs: Vec<Point> = (0..rounds)
            .map(|_| {
                Point::new((0..dim).map(|_| scale * stream.next_gaussian()).collect())
                    .expect("finite")
            })
            .collect();
        for spec in &specs {
            let mut state = LearnerState::new(dim);
            for g in &gs {
                state = update_state(&state, g).expect("dims match").0;
                let closed = match predict(*spec, &state) {
                    Ok(p) => p,
                    Err(_) => continue,
                };
                let oracle = match ftrl_argmin_oracle(*spec, &state, &state.grad_sum) {
                    Ok(p) => p,
                    Err(_) => continue,
                };
                let mut d = closed.clone();
                d.add_assign(&oracle.scaled(-1.0)).expect("dims match");
                let err = norm(&d);
                let allow = 1e-6 * (1.0 + norm(&closed));
                worst = worst.min(allow - err);
                all &= err <= allow;
                comparisons += 1;
            }
        }
    }
    c.add(
        "closed-form update matches golden-section argmin",
        all,
        worst,
        format!("{comparisons} comparisons over k x gamma grid"),
    );
    c.results
}

fn bounds_suite(seed: u64) -> Vec<PropertyResult> {
    let mut c = Collector::new();

    // The published constant at k = sqrt(5).
    let analytic = 45.0 / 5f64.sqrt() * 3f64.exp();
    let history = vec![Point::scalar(-1.0).expect("finite"); 10];
    let report =
        crate::learner::theorem8_bound(&history, &Point::zeros(1), 5f64.sqrt()).expect("bound");
    let pass = (report.constant_term - analytic).abs() <= 1e-6 * analytic
        && (analytic - 405.0).abs() <= 1.0;
    c.add(
        "freerex constant term at k = sqrt(5)",
        pass,
        -(report.constant_term - analytic).abs(),
        format!("analytic {analytic:.4}, published rounding 405"),
    );

    // Bound domination across representative runs.
    let mut configs: Vec<ExperimentConfig> = Vec::new();
    for (algo, k, gamma) in [
        ("freerex", 1.0, 1.0),
        ("freerex", 5f64.sqrt(), 1.0),
        ("ftrl-gamma", 5f64.sqrt(), 0.75),
        ("ftrl-gamma", 5.0, 0.6),
    ] {
        configs.push(ExperimentConfig {
            algo: algo.into(),
            k: Some(k),
            gamma: Some(gamma),
            step: None,
            source: "random".into(),
            horizon: Some(2000),
            dim: Some(3),
            seed: Some(seed),
            scale: Some(1.0),
            scale_end: None,
            jump_round: None,
            jump_factor: None,
            q: None,
            warmup: None,
            comparators: vec!["zero".into(), "1".into(), "-1".into(), "empirical-best".into()],
            clamp: None,
            records: false,
            generator: None,
        });
    }
    let mut dom_ok = true;
    let mut dom_worst = f64::INFINITY;
    let mut dom_detail = String::new();
    for config in &configs {
        match run(config) {
            Ok(out) => {
                for inv in &out.summary.invariants {
                    if inv.name.starts_with("bound domination") {
                        dom_ok &= inv.pass;
                        dom_worst = dom_worst.min(inv.worst_slack);
                    }
                }
            }
            Err(e) => {
                dom_ok = false;
                dom_detail = e.to_string();
            }
        }
    }
    c.add(
        "bound domination on random runs",
        dom_ok,
        dom_worst,
        if dom_detail.is_empty() {
            "per-prefix, comparators {0, +-e1, empirical-best}".into()
        } else {
            dom_detail
        },
    );
    c.results
}

fn adversary_suite(seed: u64) -> Vec<PropertyResult> {
    let mut c = Collector::new();

    // Potential properties over the (gamma, k) grid through 1e5.
    let mut scan_ok = true;
    let mut scan_detail = Vec::new();
    for gamma in [0.6, 0.75, 1.0] {
        for k in [1.0, 2.0, 4.0] {
            let spec = RegularizerSpec::new(k, gamma).expect("valid");
            let report = scan_warmup(&spec, 100_000);
            scan_ok &= report.enforced_ok;
            scan_detail.push(format!("(g={gamma},k={k})->warmup {}", report.warmup));
        }
    }
    c.add(
        "potential increment inequality holds past scanned warmup",
        scan_ok,
        if scan_ok { 0.0 } else { -1.0 },
        scan_detail.join(", "),
    );

    // The jump branch against the exponential-update learner: exact
    // accounting and the gradient cap.
    let config = ExperimentConfig {
        algo: "freerex".into(),
        k: Some(1.0),
        gamma: Some(1.0),
        step: None,
        source: "adversary".into(),
        horizon: Some(5000),
        dim: Some(1),
        seed: Some(seed),
        scale: None,
        scale_end: None,
        jump_round: None,
        jump_factor: None,
        q: None,
        warmup: None,
        comparators: vec!["zero".into()],
        clamp: None,
        records: false,
        generator: None,
    };
    match run(&config) {
        Ok(out) => {
            let fired = out.summary.outcome == "case2-fired";
            c.add(
                "jump branch fires against the exponential learner",
                fired,
                if fired { 0.0 } else { -1.0 },
                format!("trigger round {:?}", out.summary.trigger_round),
            );
            for name in ["case2 accounting identity", "adversary gradient cap"] {
                if let Some(inv) = out.summary.invariants.iter().find(|i| i.name == name) {
                    c.add(name, inv.pass, inv.worst_slack, format!("{} checks", inv.checks));
                } else {
                    c.add(name, false, -1.0, "not evaluated".into());
                }
            }
        }
        Err(e) => c.add("jump branch fires against the exponential learner", false, -1.0, e.to_string()),
    }

    // Drift closure against the constant-zero learner.
    let mut adv = Adversary::new(
        RegularizerSpec::new(1.0, 1.0).expect("valid"),
        1.0,
        Some(50),
    );
    let mut learner = FtrlLearner::new(RegularizerSpec::new(1.0, 1.0).expect("valid"), 1);
    let mut zero_plays_ok = true;
    let mut s_check = 0.0;
    for _ in 0..400 {
        // A constant-zero play stream: never triggers.
        let g = adv.next_gradient(0.0).expect("drifting");
        zero_plays_ok &= g == -1.0;
        s_check += 0.0;
        let _ = learner.observe(&Point::scalar(g).expect("finite"));
    }
    let closed = adv.close_drift().expect("past warmup");
    let case1 = matches!(closed, DriftClose::Case1 { .. });
    c.add(
        "zero learner never triggers; drift closes with large comparator",
        zero_plays_ok && case1 && adv.phase() == Phase::Finished,
        0.0,
        format!("S_T = {s_check}"),
    );

    // Cap formula sanity at the firing scale.
    let spec = RegularizerSpec::new(1.0, 1.0).expect("valid");
    let cap_ok = (jump_cap_ratio(&spec, 101) - 1.0).abs() < 1e-12;
    c.add(
        "gradient cap equals jump magnitude at firing rounds",
        cap_ok,
        0.0,
        "t-1 = 100 gives 720".into(),
    );
    c.results
}

fn jump_cap_ratio(spec: &RegularizerSpec, t: u64) -> f64 {
    crate::adversary::jump_gradient(spec, t) / gradient_cap(spec, t)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_suites_pass_on_default_seed() {
        for suite in SUITES {
            let results = run_suite(suite, 7).unwrap();
            for r in &results {
                assert!(r.pass, "{suite}/{}: slack {} ({})", r.name, r.worst_slack, r.detail);
            }
        }
    }

    #[test]
    fn unknown_suite_is_config_error() {
        assert!(run_suite("nope", 0).is_err());
    }
}
