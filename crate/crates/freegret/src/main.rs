//! Command-line front end: run experiments, evaluate bounds on stored
//! traces, and execute the verification suites.
//!
//! Exit codes: 0 success, 2 config error, 3 invariant failure, 4 numeric
//! range error without a clamp policy.

use clap::{Args, Parser, Subcommand};
use freegret::adversary::frontier_lower_bound;
use freegret::harness::{run, ExperimentConfig, HarnessError, ResultFile, GENERATOR_ID};
use freegret::learner::BoundTracker;
use freegret::regularizers::RegularizerSpec;
use freegret::trace::{read_trace, write_trace};
use freegret::verify::{run_suite, SUITES};
use freegret::{norm, Point};
use std::path::PathBuf;
use std::process::ExitCode;

const EXIT_OK: u8 = 0;
const EXIT_CONFIG: u8 = 2;
const EXIT_INVARIANT: u8 = 3;
const EXIT_RANGE: u8 = 4;

#[derive(Parser)]
#[command(
    name = "freegret",
    about = "Parameter-free online convex optimization: learners, adversarial lower-bound sequences, and regret-bound evaluators"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a configured experiment and write a result file.
    Run(RunArgs),
    /// Evaluate the regret bounds and the lower-bound frontier on a stored
    /// trace, without running a learner.
    Bound(BoundArgs),
    /// Run a verification suite and print per-property pass/fail lines.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct RunArgs {
    /// JSON config file. Exclusive with the inline experiment flags.
    #[arg(long)]
    config: Option<PathBuf>,
    /// freerex | ftrl-gamma | ogd | adagrad
    #[arg(long)]
    algo: Option<String>,
    #[arg(long)]
    k: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    /// Baseline step size.
    #[arg(long)]
    step: Option<f64>,
    /// constant-neg1 | random | adversary | losses:<kind> | trace:<path>
    #[arg(long)]
    source: Option<String>,
    /// Horizon (number of rounds).
    #[arg(long = "T")]
    horizon: Option<u64>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    scale: Option<f64>,
    #[arg(long)]
    scale_end: Option<f64>,
    #[arg(long)]
    jump_round: Option<u64>,
    #[arg(long)]
    jump_factor: Option<f64>,
    /// Adversary trigger multiplier.
    #[arg(long)]
    q: Option<f64>,
    /// Adversary warmup threshold (scanned when omitted).
    #[arg(long)]
    warmup: Option<u64>,
    /// Comparator: zero | empirical-best | coordinates. Repeatable.
    #[arg(long = "u")]
    comparators: Vec<String>,
    /// record-and-clamp (default) | error
    #[arg(long)]
    clamp: Option<String>,
    /// Include per-round records in the result file.
    #[arg(long)]
    records: bool,
    /// Result file path (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the gradient trace as CSV.
    #[arg(long)]
    trace_out: Option<PathBuf>,
}

#[derive(Args)]
struct BoundArgs {
    /// CSV trace to evaluate.
    #[arg(long)]
    trace: PathBuf,
    #[arg(long)]
    k: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    /// Comparator: zero | coordinates. Repeatable; default zero.
    #[arg(long = "u")]
    comparators: Vec<String>,
    /// Output path (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    /// recursions | regularizers | oracle | bounds | adversary | all
    #[arg(long)]
    suite: String,
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Bound(args) => cmd_bound(args),
        Command::Verify(args) => cmd_verify(args),
    };
    ExitCode::from(code)
}

fn config_from_args(args: &RunArgs) -> Result<ExperimentConfig, String> {
    if args.config.is_some() {
        let inline_given = args.algo.is_some()
            || args.k.is_some()
            || args.gamma.is_some()
            || args.step.is_some()
            || args.source.is_some()
            || args.horizon.is_some()
            || args.dim.is_some()
            || args.seed.is_some()
            || args.scale.is_some()
            || args.scale_end.is_some()
            || args.jump_round.is_some()
            || args.jump_factor.is_some()
            || args.q.is_some()
            || args.warmup.is_some()
            || !args.comparators.is_empty()
            || args.clamp.is_some()
            || args.records;
        if inline_given {
            return Err(
                "--config conflicts with inline experiment flags; pass one or the other".into(),
            );
        }
        let path = args.config.as_ref().unwrap();
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        return serde_json::from_str(&text)
            .map_err(|e| format!("bad config {}: {e}", path.display()));
    }
    let algo = args.algo.clone().ok_or("--algo required (or --config)")?;
    let source = args.source.clone().ok_or("--source required (or --config)")?;
    let generator = if source == "random" || source.starts_with("losses:") {
        Some(GENERATOR_ID.to_string())
    } else {
        None
    };
    Ok(ExperimentConfig {
        algo,
        k: args.k,
        gamma: args.gamma,
        step: args.step,
        source,
        horizon: args.horizon,
        dim: args.dim,
        seed: args.seed,
        scale: args.scale,
        scale_end: args.scale_end,
        jump_round: args.jump_round,
        jump_factor: args.jump_factor,
        q: args.q,
        warmup: args.warmup,
        comparators: args.comparators.clone(),
        clamp: args.clamp.clone(),
        records: args.records,
        generator,
    })
}

fn cmd_run(args: RunArgs) -> u8 {
    let config = match config_from_args(&args) {
        Ok(c) => c,
        Err(msg) => {
            eprintln!("error: {msg}");
            return EXIT_CONFIG;
        }
    };
    let out = match run(&config) {
        Ok(out) => out,
        Err(HarnessError::Range { round, ln_mag }) => {
            eprintln!(
                "error: range overflow at round {round} (ln|w| = {ln_mag}) and clamp policy is `error`"
            );
            return EXIT_RANGE;
        }
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    if let Some(path) = &args.trace_out {
        if let Err(e) = write_trace(path, &out.gradients) {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    }
    let result = ResultFile {
        schema: "freegret/1",
        config: &config,
        records: if config.records {
            Some(&out.records)
        } else {
            None
        },
        summary: &out.summary,
    };
    let json = serde_json::to_string_pretty(&result).expect("serializable") + "\n";
    match &args.out {
        Some(path) => {
            if let Err(e) = std::fs::write(path, json) {
                eprintln!("error: cannot write {}: {e}", path.display());
                return EXIT_CONFIG;
            }
        }
        None => print!("{json}"),
    }
    if out.summary.all_pass {
        EXIT_OK
    } else {
        for inv in out.summary.invariants.iter().filter(|i| i.gating && !i.pass) {
            eprintln!(
                "invariant failed: {} (worst slack {})",
                inv.name, inv.worst_slack
            );
        }
        EXIT_INVARIANT
    }
}

#[derive(serde::Serialize)]
struct BoundOutput {
    schema: &'static str,
    trace: String,
    k: f64,
    gamma: f64,
    rounds: usize,
    comparators: Vec<BoundEntry>,
}

#[derive(serde::Serialize)]
struct BoundEntry {
    label: String,
    u_norm: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    theorem8_total: Option<f64>,
    theorem3_total: f64,
    frontier_sqrt_term: f64,
    frontier_exp_ln: f64,
}

fn cmd_bound(args: BoundArgs) -> u8 {
    let gradients = match read_trace(&args.trace) {
        Ok(g) => g,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    let k = args.k.unwrap_or(5f64.sqrt());
    let gamma = args.gamma.unwrap_or(1.0);
    let spec = match RegularizerSpec::new(k, gamma) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    let dim = gradients[0].dim();
    let mut tracker = BoundTracker::new(spec, dim);
    for g in &gradients {
        if let Err(e) = tracker.absorb(g) {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    }
    let labels = if args.comparators.is_empty() {
        vec!["zero".to_string()]
    } else {
        args.comparators.clone()
    };
    let mut entries = Vec::new();
    for label in &labels {
        let point = match parse_point(label, dim) {
            Ok(p) => p,
            Err(msg) => {
                eprintln!("error: {msg}");
                return EXIT_CONFIG;
            }
        };
        let u_norm = norm(&point);
        let theorem8_total = if gamma == 1.0 {
            tracker.theorem8(u_norm).ok().map(|b| b.total)
        } else {
            None
        };
        let theorem3_total = match tracker.theorem3(u_norm, None) {
            Ok(b) => b.total,
            Err(e) => {
                eprintln!("error: {e}");
                return EXIT_CONFIG;
            }
        };
        let frontier = match frontier_lower_bound(&spec, &gradients, u_norm) {
            Ok(f) => f,
            Err(e) => {
                eprintln!("error: {e}");
                return EXIT_CONFIG;
            }
        };
        entries.push(BoundEntry {
            label: label.clone(),
            u_norm,
            theorem8_total,
            theorem3_total,
            frontier_sqrt_term: frontier.sqrt_t_term,
            frontier_exp_ln: frontier.exp_term.ln(),
        });
    }
    let output = BoundOutput {
        schema: "freegret/1",
        trace: args.trace.display().to_string(),
        k,
        gamma,
        rounds: gradients.len(),
        comparators: entries,
    };
    let json = serde_json::to_string_pretty(&output).expect("serializable") + "\n";
    match &args.out {
        Some(path) => {
            if let Err(e) = std::fs::write(path, json) {
                eprintln!("error: cannot write {}: {e}", path.display());
                return EXIT_CONFIG;
            }
        }
        None => print!("{json}"),
    }
    EXIT_OK
}

fn parse_point(label: &str, dim: usize) -> Result<Point, String> {
    if label == "zero" {
        return Ok(Point::zeros(dim));
    }
    let values: Result<Vec<f64>, _> = label.split(',').map(|c| c.trim().parse::<f64>()).collect();
    let values = values.map_err(|_| format!("bad comparator `{label}`"))?;
    let coords = if values.len() == 1 && dim > 1 {
        let mut v = vec![0.0; dim];
        v[0] = values[0];
        v
    } else if values.len() == dim {
        values
    } else {
        return Err(format!(
            "comparator `{label}` has {} coordinates, trace dim is {dim}",
            values.len()
        ));
    };
    Point::new(coords).map_err(|e| e.to_string())
}

fn cmd_verify(args: VerifyArgs) -> u8 {
    let suites: Vec<&str> = if args.suite == "all" {
        SUITES.to_vec()
    } else {
        vec![args.suite.as_str()]
    };
    let mut all_pass = true;
    for suite in suites {
        let results = match run_suite(suite, args.seed) {
            Ok(r) => r,
            Err(e) => {
                eprintln!("error: {e}");
                return EXIT_CONFIG;
            }
        };
        for r in results {
            let status = if r.pass { "PASS" } else { "FAIL" };
            println!(
                "{status} [{suite}] {} (worst slack {:.3e}) {}",
                r.name, r.worst_slack, r.detail
            );
            all_pass &= r.pass;
        }
    }
    if all_pass {
        EXIT_OK
    } else {
        EXIT_INVARIANT
    }
}
