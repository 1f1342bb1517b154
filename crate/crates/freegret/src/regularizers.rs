//! The gamma-family of radial regularizer profiles: phi and its first two
//! derivatives, the auxiliary h = phi * phi'' with its monotone inverse, and
//! a numeric checker for the shape conditions an adaptive regularizer must
//! satisfy.
//!
//! For gamma = 1 everything is closed form; for gamma < 1, phi is evaluated
//! by adaptive quadrature after the substitution z = e^s - 1, which turns
//! `integral of log^gamma(z+1) dz` into `integral of s^gamma e^s ds` on a
//! short interval.

use std::collections::HashMap;
use std::sync::Mutex;
use thiserror::Error;

/// Largest argument h_inv will return in-range before switching to the
/// log-domain answer.
const H_INV_MAX: f64 = 1e300;

#[derive(Debug, Error)]
pub enum RegularizerError {
    #[error("argument must be nonnegative, got {0}")]
    NegativeInput(f64),
    #[error("invalid regularizer parameter: {0}")]
    InvalidSpec(String),
    #[error("h_inv({y}) exceeds the floating range; log-domain answer ln(1+x) = {ln1p_answer}")]
    Range { y: f64, ln1p_answer: f64 },
}

/// The (k, gamma) pair selecting a point on the regret frontier.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegularizerSpec {
    k: f64,
    gamma: f64,
}

impl RegularizerSpec {
    /// Requires k >= 1 and gamma in (1/2, 1].
    pub fn new(k: f64, gamma: f64) -> Result<Self, RegularizerError> {
        if !(k.is_finite() && k >= 1.0) {
            return Err(RegularizerError::InvalidSpec(format!("k must be >= 1, got {k}")));
        }
        if !(gamma.is_finite() && gamma > 0.5 && gamma <= 1.0) {
            return Err(RegularizerError::InvalidSpec(format!(
                "gamma must lie in (1/2, 1], got {gamma}"
            )));
        }
        Ok(RegularizerSpec { k, gamma })
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn profile(&self) -> PhiProfile {
        PhiProfile::new(self.gamma)
    }
}

/// A one-dimensional radial profile: the scalar function whose composition
/// with the norm builds the regularizer. The condition checker accepts any
/// implementor, not just the gamma family.
pub trait RadialPhi {
    fn gamma(&self) -> f64;
    fn phi(&self, x: f64) -> Result<f64, RegularizerError>;
    fn phi_prime(&self, x: f64) -> Result<f64, RegularizerError>;
    fn phi_double_prime(&self, x: f64) -> Result<f64, RegularizerError>;
}

/// The gamma-family profile phi(x) = integral_0^x log^gamma(z+1) dz.
#[derive(Debug)]
pub struct PhiProfile {
    gamma: f64,
    /// Relative quadrature tolerance for gamma < 1.
    pub quad_rel_tol: f64,
    memo: Mutex<HashMap<u64, f64>>,
}

impl PhiProfile {
    pub fn new(gamma: f64) -> Self {
        PhiProfile {
            gamma,
            quad_rel_tol: 1e-10,
            memo: Mutex::new(HashMap::new()),
        }
    }

    fn check_nonneg(&self, x: f64) -> Result<(), RegularizerError> {
        if !(x >= 0.0) {
            return Err(RegularizerError::NegativeInput(x));
        }
        Ok(())
    }

    /// integral over [a, b] of log^gamma(z+1) dz, signed. Exposed so bound
    /// evaluators can advance an anchored value instead of re-integrating
    /// from zero each round.
    pub fn phi_between(&self, a: f64, b: f64) -> Result<f64, RegularizerError> {
        self.check_nonneg(a)?;
        self.check_nonneg(b)?;
        if self.gamma == 1.0 {
            return Ok(phi_closed_gamma1(b) - phi_closed_gamma1(a));
        }
        if a == b {
            return Ok(0.0);
        }
        let (lo, hi, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };
        // Substitute z = e^s - 1: integrand becomes s^gamma e^s on
        // [ln(1+lo), ln(1+hi)].
        let s_lo = lo.ln_1p();
        let s_hi = hi.ln_1p();
        let g = self.gamma;
        let f = |s: f64| s.powf(g) * s.exp();
        let val = adaptive_simpson(&f, s_lo, s_hi, self.quad_rel_tol);
        Ok(sign * val)
    }
}

impl RadialPhi for PhiProfile {
    fn gamma(&self) -> f64 {
        self.gamma
    }

    /// phi(x). Closed form (x+1)log(x+1) - x at gamma = 1, quadrature below.
    fn phi(&self, x: f64) -> Result<f64, RegularizerError> {
        self.check_nonneg(x)?;
        if self.gamma == 1.0 {
            return Ok(phi_closed_gamma1(x));
        }
        if x == 0.0 {
            return Ok(0.0);
        }
        let key = x.to_bits();
        if let Some(v) = self.memo.lock().unwrap().get(&key) {
            return Ok(*v);
        }
        let v = self.phi_between(0.0, x)?;
        let mut memo = self.memo.lock().unwrap();
        if memo.len() < 65536 {
            memo.insert(key, v);
        }
        Ok(v)
    }

    /// phi'(x) = log^gamma(x+1).
    fn phi_prime(&self, x: f64) -> Result<f64, RegularizerError> {
        self.check_nonneg(x)?;
        Ok(x.ln_1p().powf(self.gamma))
    }

    /// phi''(x) = gamma log^{gamma-1}(x+1) / (x+1). At x = 0 this is 1 for
    /// gamma = 1 and diverges for gamma < 1, reported as +inf.
    fn phi_double_prime(&self, x: f64) -> Result<f64, RegularizerError> {
        self.check_nonneg(x)?;
        if self.gamma == 1.0 {
            return Ok(1.0 / (x + 1.0));
        }
        if x == 0.0 {
            return Ok(f64::INFINITY);
        }
        let l = x.ln_1p();
        Ok(self.gamma * l.powf(self.gamma - 1.0) / (x + 1.0))
    }
}

fn phi_closed_gamma1(x: f64) -> f64 {
    (x + 1.0) * x.ln_1p() - x
}

/// Anchored phi evaluation for an argument that drifts between calls, as in
/// per-prefix bound evaluation where x moves by O(1) each round. Each call
/// integrates only the hop from the previous argument.
#[derive(Debug, Default)]
pub struct PhiSeries {
    anchor: Option<(f64, f64)>,
}

impl PhiSeries {
    pub fn new() -> Self {
        PhiSeries::default()
    }

    pub fn eval(&mut self, profile: &PhiProfile, x: f64) -> Result<f64, RegularizerError> {
        if profile.gamma() == 1.0 {
            return profile.phi(x);
        }
        let v = match self.anchor {
            Some((ax, av)) if (x - ax).abs() <= 0.5 * (1.0 + x.max(ax)) => {
                av + profile.phi_between(ax, x)?
            }
            _ => profile.phi(x)?,
        };
        self.anchor = Some((x, v));
        Ok(v)
    }
}

/// h(x) = phi(x) phi''(x), taken as 0 at x = 0 (the limit; for gamma < 1
/// the factors are 0 * inf there).
pub fn h(profile: &dyn RadialPhi, x: f64) -> Result<f64, RegularizerError> {
    if !(x >= 0.0) {
        return Err(RegularizerError::NegativeInput(x));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    Ok(profile.phi(x)? * profile.phi_double_prime(x)?)
}

/// Largest x with h(x) <= y, found by monotone bisection. When the answer
/// exceeds the floating range the error carries ln(1+x) solved from the
/// large-x form of h, so callers can still order-compare.
pub fn h_inv(profile: &PhiProfile, y: f64) -> Result<f64, RegularizerError> {
    if !(y >= 0.0) {
        return Err(RegularizerError::NegativeInput(y));
    }
    if y == 0.0 {
        return Ok(0.0);
    }
    let mut hi = 1.0f64;
    while h(profile, hi)? < y {
        hi *= 2.0;
        if hi > H_INV_MAX {
            return Err(RegularizerError::Range {
                y,
                ln1p_answer: h_inv_log_domain(profile.gamma(), y),
            });
        }
    }
    let mut lo = if hi > 1.0 { hi / 2.0 } else { 0.0 };
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if h(profile, mid)? <= y {
            lo = mid;
        } else {
            hi = mid;
        }
        if (hi - lo) <= 1e-14 * hi.max(1.0) {
            break;
        }
    }
    Ok(lo.max(0.0))
}

/// Solves the large-x asymptote of h for lambda = ln(1+x):
/// gamma * lambda^{2 gamma - 1} * (1 - gamma / lambda) = y.
/// Only called when the true lambda exceeds ~690, where the dropped
/// e^{-lambda} terms are below resolution.
fn h_inv_log_domain(gamma: f64, y: f64) -> f64 {
    let f = |lam: f64| gamma * lam.powf(2.0 * gamma - 1.0) * (1.0 - gamma / lam) - y;
    let mut lo = 600.0;
    let mut hi = 650.0;
    while f(hi) < 0.0 {
        lo = hi;
        hi *= 2.0;
        if hi > 1e18 {
            break;
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) <= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-9 * hi {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Adaptive Simpson with relative termination against the running total.
fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, rel_tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    // Absolute floor keeps the recursion from chasing zeros near a = 0.
    let tol = rel_tol * whole.abs().max(f64::MIN_POSITIVE);
    simpson_step(f, a, b, fa, fm, fb, whole, tol, 52)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

/// One condition's outcome in the shape report.
#[derive(Debug, Clone)]
pub struct ConditionCheck {
    pub name: String,
    pub pass: bool,
    /// Largest violation magnitude observed (0 when clean).
    pub worst_violation: f64,
    /// Grid point where the worst violation occurred, if any.
    pub at: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct ConditionReport {
    pub checks: Vec<ConditionCheck>,
}

impl ConditionReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

/// Numerically verifies the adaptive-regularizer shape conditions on a grid:
/// phi(0) = 0, phi' >= 0, phi'' >= 0, phi''' <= 0 (central differences of
/// phi''), h = phi*phi'' nondecreasing (the coercivity proxy), plus the two
/// gamma-optimality envelopes phi <= x log^gamma(x+1) and
/// phi*phi'' >= (1/2) gamma (x/(x+1)) log^{2 gamma - 1}(x+1).
pub fn check_adaptive_conditions(profile: &dyn RadialPhi, grid: &[f64]) -> ConditionReport {
    let mut checks = Vec::new();
    let gamma = profile.gamma();

    let phi0 = profile.phi(0.0).unwrap_or(f64::NAN);
    checks.push(ConditionCheck {
        name: "phi(0) = 0".into(),
        pass: phi0 == 0.0,
        worst_violation: phi0.abs(),
        at: Some(0.0),
    });

    let mut worst = |name: &str, items: Vec<(f64, f64)>| {
        // items: (x, violation magnitude); violation <= 0 means clean.
        let mut worst_v = 0.0f64;
        let mut worst_x = None;
        for (x, v) in &items {
            if *v > worst_v {
                worst_v = *v;
                worst_x = Some(*x);
            }
        }
        checks.push(ConditionCheck {
            name: name.into(),
            pass: worst_v == 0.0,
            worst_violation: worst_v,
            at: worst_x,
        });
    };

    // Allowance for exact inequalities: quadrature tolerance plus rounding.
    let tol_ineq = |scale: f64| 1e-8 * scale.abs().max(1.0);
    // Allowance for the finite-difference phi''' check, scaled to the local
    // curvature over (1+x) where the derivative lives.
    let tol_fd = |x: f64, curv: f64| 1e-6 * curv.abs().max(1.0) / (1.0 + x);

    let mut v_prime = Vec::new();
    let mut v_dd = Vec::new();
    let mut v_third = Vec::new();
    let mut v_upper = Vec::new();
    let mut v_lower = Vec::new();
    for &x in grid {
        let p1 = profile.phi_prime(x).unwrap_or(f64::NAN);
        v_prime.push((x, if p1 >= 0.0 { 0.0 } else { -p1 }));
        let p2 = profile.phi_double_prime(x).unwrap_or(f64::NAN);
        v_dd.push((x, if p2 >= 0.0 || p2.is_infinite() { 0.0 } else { -p2 }));

        // phi''' by central differences of phi'', step scaled to the point.
        if x > 0.0 && p2.is_finite() {
            let step = (1e-5 * (1.0 + x)).min(0.5 * x);
            let left = profile.phi_double_prime(x - step).unwrap_or(f64::NAN);
            let right = profile.phi_double_prime(x + step).unwrap_or(f64::NAN);
            if left.is_finite() && right.is_finite() {
                let third = (right - left) / (2.0 * step);
                let allow = tol_fd(x, p2);
                v_third.push((x, if third <= allow { 0.0 } else { third }));
            }
        }

        // Envelopes from the gamma-optimality conditions.
        if x > 0.0 {
            let envelope = x * x.ln_1p().powf(gamma);
            let phi = profile.phi(x).unwrap_or(f64::NAN);
            let over = phi - envelope;
            v_upper.push((x, if over <= tol_ineq(envelope) { 0.0 } else { over }));

            let hv = h(profile, x).unwrap_or(f64::NAN);
            let floor = 0.5 * gamma * (x / (x + 1.0)) * x.ln_1p().powf(2.0 * gamma - 1.0);
            let under = floor - hv;
            v_lower.push((x, if under <= tol_ineq(floor) { 0.0 } else { under }));
        }
    }
    worst("phi' >= 0", v_prime);
    worst("phi'' >= 0", v_dd);
    worst("phi''' <= 0 (finite differences)", v_third);

    // h nondecreasing along the grid, the finite proxy for h -> inf.
    let mut v_mono = Vec::new();
    let mut prev: Option<(f64, f64)> = None;
    for &x in grid {
        let hv = h(profile, x).unwrap_or(f64::NAN);
        if let Some((_px, ph)) = prev {
            let drop = ph - hv;
            v_mono.push((x, if drop <= tol_ineq(ph) { 0.0 } else { drop }));
        }
        prev = Some((x, hv));
    }
    worst("h = phi phi'' nondecreasing", v_mono);
    worst("gamma-optimality: phi <= x log^gamma(x+1)", v_upper);
    worst(
        "gamma-optimality: phi phi'' >= (gamma/2)(x/(x+1)) log^{2g-1}(x+1)",
        v_lower,
    );

    ConditionReport { checks }
}
