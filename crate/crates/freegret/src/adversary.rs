//! The constructive lower-bound sequence: a scalar adversary that feeds a
//! deterministic learner -1 gradients while tracking the potential Z_t, then
//! either fires one large positive gradient when the learner's iterate
//! crosses the threshold (the jump branch, evaluated at u = 0) or closes the
//! drift with a large comparator (the drift branch). Multi-dimensional
//! learners are attacked on their first coordinate.

use crate::core::Point;
use crate::magnitude::LogMag;
use crate::regularizers::RegularizerSpec;
use thiserror::Error;

/// Default scan ceiling for the warmup search and the r_t inequality check.
pub const DEFAULT_SCAN_HORIZON: u64 = 100_000;

#[derive(Debug, Error, PartialEq)]
pub enum AdversaryError {
    #[error("adversary already finished")]
    Finished,
    #[error("drift cannot close before the warmup threshold ({warmup})")]
    InsideWarmup { warmup: u64 },
    #[error("frontier needs a round with a positive previous maximum")]
    EmptyHistory,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Phase {
    Drifting,
    Fired,
    Finished,
}

/// ln of the exponent argument's base quantities for Z_t:
/// Z_t = t^{1 - 1/(2 gamma)} / (2t) * (exp(t^{1/(2 gamma)} / (4k)^{1/gamma}) - 1).
pub fn z_value(spec: &RegularizerSpec, t: u64) -> LogMag {
    debug_assert!(t >= 1);
    let gamma = spec.gamma();
    let k = spec.k();
    let tf = t as f64;
    let e = tf.powf(1.0 / (2.0 * gamma)) / (4.0 * k).powf(1.0 / gamma);
    let prefix = (1.0 - 1.0 / (2.0 * gamma)) * tf.ln() - (2.0 * tf).ln();
    LogMag::from_ln(prefix).mul(LogMag::from_ln_expm1(e))
}

/// The magnitude of the branch-two gradient at firing round t:
/// 18 gamma (4k)^{1/gamma} (t-1)^{1 - 1/(2 gamma)}.
pub fn jump_gradient(spec: &RegularizerSpec, t: u64) -> f64 {
    let gamma = spec.gamma();
    let k = spec.k();
    18.0 * gamma * (4.0 * k).powf(1.0 / gamma) * ((t - 1) as f64).powf(1.0 - 1.0 / (2.0 * gamma))
}

/// Every emitted gradient satisfies |g_t| <= max(1, jump magnitude at t).
pub fn gradient_cap(spec: &RegularizerSpec, t: u64) -> f64 {
    if t <= 1 {
        return 1.0;
    }
    1.0f64.max(jump_gradient(spec, t))
}

/// Where each asymptotic warmup property first holds through the horizon.
#[derive(Debug, Clone, serde::Serialize)]
pub struct WarmupReport {
    pub warmup: u64,
    pub scan_horizon: u64,
    /// True when Z-monotonicity and the r_t growth inequality hold on all
    /// of (warmup, horizon].
    pub enforced_ok: bool,
    /// Smallest t0 after which each of the four shape properties holds
    /// through the horizon; None when it never stabilizes at this scale.
    /// Order: quarter-vs-shifted-exp, increment-vs-shifted-exp,
    /// shifted-exp-vs-constant, jump-at-least-one.
    pub property_thresholds: [Option<u64>; 4],
}

/// Scans t in [2, horizon] and returns the largest t at which either the
/// Z-monotonicity or the r_t growth inequality fails (warmup must exceed
/// it), together with the thresholds for the checked-only properties.
pub fn scan_warmup(spec: &RegularizerSpec, horizon: u64) -> WarmupReport {
    let gamma = spec.gamma();
    let k = spec.k();
    let four_k = (4.0 * k).powf(1.0 / gamma);
    let drift_exp = |t: f64| t.powf(1.0 / (2.0 * gamma)) / four_k;

    let mut last_enforced_fail = 1u64;
    let mut last_fail = [1u64; 4];
    let mut prev_ln_z = z_value(spec, 1).ln();
    for t in 2..=horizon {
        let ln_z = z_value(spec, t).ln();
        let tm1 = (t - 1) as f64;

        let monotone = ln_z > prev_ln_z;
        let mut r_ok = false;
        if monotone {
            let ln_r = LogMag::from_ln(ln_z)
                .sub(LogMag::from_ln(prev_ln_z))
                .map(|m| m.ln())
                .unwrap_or(f64::NEG_INFINITY);
            let ln_rhs = prev_ln_z
                - (3.0 * gamma * four_k).ln()
                - (1.0 - 1.0 / (2.0 * gamma)) * tm1.ln();
            r_ok = ln_r >= ln_rhs;
        }
        if !(monotone && r_ok) {
            last_enforced_fail = t;
        }

        // Checked-only shape properties, all in the log domain.
        let e_t = drift_exp(t as f64);
        let e_prev = drift_exp(tm1);
        let half_prev = 0.5 * e_prev;
        // (1/4)(e^{E_t} - 1) >= e^{E_{t-1}/2} / (t-1)
        let p3 = LogMag::from_ln_expm1(e_t).ln() - 4f64.ln() >= half_prev - tm1.ln();
        // (e^{E_{t-1}} - 1) / (36 gamma (4k)^{1/g} (t-1)) >= e^{E_{t-1}/2} / (t-1)
        let p4 = LogMag::from_ln_expm1(e_prev).ln() - (36.0 * gamma * four_k).ln() - tm1.ln()
            >= half_prev - tm1.ln();
        // e^{E_{t-1}/2} / (t-1) >= exp((1/4)(1/(288 gamma k^2))^{1/(2g-1)})
        let p5 = half_prev - tm1.ln()
            >= 0.25 * (1.0 / (288.0 * gamma * k * k)).powf(1.0 / (2.0 * gamma - 1.0));
        // jump magnitude at least 1
        let p6 = jump_gradient(spec, t) >= 1.0;
        for (i, ok) in [p3, p4, p5, p6].into_iter().enumerate() {
            if !ok {
                last_fail[i] = t;
            }
        }

        prev_ln_z = ln_z;
    }

    let thresholds = last_fail.map(|t| if t < horizon { Some(t) } else { None });
    WarmupReport {
        warmup: last_enforced_fail,
        scan_horizon: horizon,
        enforced_ok: last_enforced_fail < horizon,
        property_thresholds: thresholds,
    }
}

/// Outcome of closing a drift run that never fired.
#[derive(Debug, Clone, Copy)]
pub enum DriftClose {
    /// S_T < Z_T: the drift branch applies with comparator
    /// u = (exp(T^{1/(2 gamma)}/(4k)^{1/gamma}) - 1) / T.
    Case1 { u: LogMag },
    /// S_T >= Z_T at this horizon: neither branch concluded.
    Inconclusive { s: f64, ln_z: f64 },
}

/// The lower-bound generator. Deterministic learners only: the trigger
/// compares the actual play against (q/2) r_t.
#[derive(Debug, Clone)]
pub struct Adversary {
    spec: RegularizerSpec,
    q: f64,
    warmup: u64,
    t: u64,
    /// Sum of the learner's plays over drift rounds.
    s: f64,
    ln_z: f64,
    phase: Phase,
    comparator: Option<f64>,
    fired: Option<(f64, f64)>, // (w_T, g_T)
}

impl Adversary {
    /// `warmup = None` scans for the smallest threshold past which the
    /// enforced potential properties hold empirically for this (gamma, k).
    pub fn new(spec: RegularizerSpec, q: f64, warmup: Option<u64>) -> Self {
        let warmup = warmup.unwrap_or_else(|| scan_warmup(&spec, DEFAULT_SCAN_HORIZON).warmup);
        Adversary {
            spec,
            q,
            warmup,
            t: 0,
            s: 0.0,
            ln_z: f64::NEG_INFINITY,
            phase: Phase::Drifting,
            comparator: None,
            fired: None,
        }
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn rounds(&self) -> u64 {
        self.t
    }

    pub fn warmup(&self) -> u64 {
        self.warmup
    }

    /// Drift-round sum of plays; at the firing round T this is S_{T-1}.
    pub fn drift_sum(&self) -> f64 {
        self.s
    }

    pub fn comparator(&self) -> Option<f64> {
        self.comparator
    }

    /// (w_T, g_T) once the jump has fired.
    pub fn firing(&self) -> Option<(f64, f64)> {
        self.fired
    }

    /// Emits the gradient for the next round given the learner's play w_t.
    /// While drifting this is -1; past warmup, a play exceeding (q/2) r_t
    /// draws the jump gradient and ends the game at u = 0.
    pub fn next_gradient(&mut self, w: f64) -> Result<f64, AdversaryError> {
        if self.phase != Phase::Drifting {
            return Err(AdversaryError::Finished);
        }
        let t = self.t + 1;
        let ln_z_next = z_value(&self.spec, t).ln();
        if t > self.warmup && w > 0.0 {
            let r = LogMag::from_ln(ln_z_next).sub(LogMag::from_ln(self.ln_z));
            if let Some(r) = r {
                let threshold = r.mul_value(self.q / 2.0);
                if w.ln() > threshold.ln() {
                    let g = jump_gradient(&self.spec, t);
                    self.t = t;
                    self.phase = Phase::Fired;
                    self.comparator = Some(0.0);
                    self.fired = Some((w, g));
                    return Ok(g);
                }
            }
        }
        self.s += w;
        self.ln_z = ln_z_next;
        self.t = t;
        Ok(-1.0)
    }

    /// Ends a drifting run at the current round T. Applicable only past the
    /// warmup; reports the drift branch when S_T < Z_T and inconclusive
    /// otherwise.
    pub fn close_drift(&mut self) -> Result<DriftClose, AdversaryError> {
        if self.phase != Phase::Drifting {
            return Err(AdversaryError::Finished);
        }
        if self.t <= self.warmup {
            return Err(AdversaryError::InsideWarmup { warmup: self.warmup });
        }
        self.phase = Phase::Finished;
        let s_below = self.s < 0.0 || (self.s.ln() < self.ln_z);
        if s_below {
            let gamma = self.spec.gamma();
            let e = (self.t as f64).powf(1.0 / (2.0 * gamma))
                / (4.0 * self.spec.k()).powf(1.0 / gamma);
            let u = LogMag::from_ln_expm1(e).mul_value(1.0 / self.t as f64);
            self.comparator = Some(u.value());
            Ok(DriftClose::Case1 { u })
        } else {
            Ok(DriftClose::Inconclusive {
                s: self.s,
                ln_z: self.ln_z,
            })
        }
    }
}

/// The two-term lower-bound frontier evaluated on a concrete history.
#[derive(Debug, Clone, Copy)]
pub struct FrontierPoint {
    pub k: f64,
    pub gamma: f64,
    /// k |u| L_max log^gamma(T|u| + 1) sqrt(T).
    pub sqrt_t_term: f64,
    /// max_t L_max (L_{t-1}^2/|g|^2_{1:t-1}) exp[(1/2)((L_t/L_{t-1})/(288 gamma k^2))^{1/(2 gamma - 1)}].
    pub exp_term: LogMag,
}

/// Evaluates both frontier terms for a gradient history and comparator norm.
pub fn frontier_lower_bound(
    spec: &RegularizerSpec,
    history: &[Point],
    u_norm: f64,
) -> Result<FrontierPoint, AdversaryError> {
    let gamma = spec.gamma();
    let k = spec.k();
    let t_total = history.len() as f64;
    let mut lip: f64 = 0.0;
    let mut sum_sq = 0.0f64;
    let mut best: Option<LogMag> = None;
    // Collected as (ln of the t-dependent factor, exponent argument) so the
    // final L_max multiplication happens once.
    let mut pending: Vec<f64> = Vec::new();
    for g in history {
        let gn = g.norm();
        if lip > 0.0 {
            let ratio = lip.max(gn) / lip;
            let arg = 0.5 * (ratio / (288.0 * gamma * k * k)).powf(1.0 / (2.0 * gamma - 1.0));
            pending.push(2.0 * lip.ln() - sum_sq.ln() + arg);
        }
        lip = lip.max(gn);
        sum_sq += gn * gn;
    }
    for ln_factor in pending {
        let term = LogMag::from_ln(lip.ln() + ln_factor);
        best = Some(match best {
            Some(b) if b >= term => b,
            _ => term,
        });
    }
    let exp_term = best.ok_or(AdversaryError::EmptyHistory)?;
    let sqrt_t_term =
        k * u_norm * lip * (t_total * u_norm).ln_1p().powf(gamma) * t_total.sqrt();
    Ok(FrontierPoint {
        k,
        gamma,
        sqrt_t_term,
        exp_term,
    })
}
