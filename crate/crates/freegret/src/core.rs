//! Vector arithmetic and the per-round learner bookkeeping shared by every
//! other module: the running gradient statistics, the inverse-learning-rate
//! recursion, its shadow variant, and the rescaling sequence `a_t`.

use thiserror::Error;

/// Relative tolerance used by the runtime inequality checks. Accumulation
/// error at desk scale (T up to 1e6) stays far below this.
pub const CHECK_REL_TOL: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum CoreError {
    #[error("non-finite coordinate at index {0}")]
    NonFinite(usize),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
}

/// A point in finite-dimensional real space under the L2 norm.
#[derive(Debug, Clone, PartialEq)]
pub struct Point {
    coords: Vec<f64>,
}

impl Point {
    /// Builds a point, rejecting NaN and infinite coordinates.
    pub fn new(coords: Vec<f64>) -> Result<Self, CoreError> {
        for (i, c) in coords.iter().enumerate() {
            if !c.is_finite() {
                return Err(CoreError::NonFinite(i));
            }
        }
        Ok(Point { coords })
    }

    pub fn zeros(dim: usize) -> Self {
        Point {
            coords: vec![0.0; dim],
        }
    }

    pub fn scalar(x: f64) -> Result<Self, CoreError> {
        Point::new(vec![x])
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn norm(&self) -> f64 {
        norm(self)
    }

    pub fn dot(&self, other: &Point) -> Result<f64, CoreError> {
        if self.dim() != other.dim() {
            return Err(CoreError::DimMismatch {
                expected: self.dim(),
                got: other.dim(),
            });
        }
        Ok(self
            .coords
            .iter()
            .zip(&other.coords)
            .map(|(a, b)| a * b)
            .sum())
    }

    pub fn add_assign(&mut self, other: &Point) -> Result<(), CoreError> {
        if self.dim() != other.dim() {
            return Err(CoreError::DimMismatch {
                expected: self.dim(),
                got: other.dim(),
            });
        }
        for (a, b) in self.coords.iter_mut().zip(&other.coords) {
            *a += b;
        }
        Ok(())
    }

    pub fn scaled(&self, c: f64) -> Point {
        Point {
            coords: self.coords.iter().map(|x| x * c).collect(),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.coords.iter().all(|&c| c == 0.0)
    }
}

/// L2 norm. Exact zero for the zero vector. Falls back to a rescaled pass
/// when the naive sum of squares over- or underflows (clamped iterates sit
/// near 1e300, where squaring is not representable).
pub fn norm(p: &Point) -> f64 {
    let sq: f64 = p.coords.iter().map(|c| c * c).sum();
    if sq.is_finite() && (sq > 0.0 || p.coords.iter().all(|&c| c == 0.0)) {
        return sq.sqrt();
    }
    let max = p.coords.iter().fold(0.0f64, |m, c| m.max(c.abs()));
    if max == 0.0 {
        return 0.0;
    }
    let scaled: f64 = p.coords.iter().map(|c| (c / max) * (c / max)).sum();
    max * scaled.sqrt()
}

/// Neumaier-compensated streaming sum. Keeps `sum_sq` and `sum_norm`
/// stable out to T = 1e6 without the cost of full pairwise summation.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StableSum {
    sum: f64,
    comp: f64,
}

impl StableSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Per-round bookkeeping: gradient accumulators, the running Lipschitz
/// estimate, the inverse-learning-rate recursion and its shadow, and `a_t`.
///
/// The recursions, with `L_t = max(L_{t-1}, |g_t|)`:
///
/// ```text
/// 1/eta_t^2   = max(1/eta_{t-1}^2 + 2|g_t|^2,               L_t     |g_{1:t}|)
/// 1/eta_t+^2  = max(1/eta_{t-1}^2 + 2|g_t| min(|g_t|, L_{t-1}), L_{t-1} |g_{1:t}|)
/// a_t         = max(a_{t-1}, (1/eta_t^2) / L_t^2)
/// ```
///
/// The shadow recursion reads the previous round's quantities; on the first
/// round its `L_0` is taken to be `L_1` (the first update is deferred until
/// `L_1` is known), which makes the two recursions coincide at t = 1.
#[derive(Debug, Clone, PartialEq)]
pub struct LearnerState {
    /// Round counter; number of gradients absorbed.
    pub t: u64,
    /// Running gradient sum g_{1:t}.
    pub grad_sum: Point,
    sum_sq_acc: StableSum,
    sum_norm_acc: StableSum,
    /// max over prefixes t' <= t of |g_{1:t'}|.
    pub max_partial_sum_norm: f64,
    /// Running maximum gradient norm L_t.
    pub lip: f64,
    /// 1/eta_t^2.
    pub inv_eta_sq: f64,
    /// 1/(eta_t^+)^2, the shadow sequence.
    pub inv_eta_plus_sq: f64,
    /// Rescaling sequence a_t (0 until the first nonzero gradient).
    pub a: f64,
}

/// Everything `update_state` computed for one round, kept so callers can
/// replay the per-round increment inequalities without re-deriving state.
#[derive(Debug, Clone, Copy)]
pub struct RoundDelta {
    pub g_norm: f64,
    /// L_{t-1} as seen by the shadow recursion (L_1 stands in for L_0).
    pub shadow_prev_lip: f64,
    /// True L_{t-1} (0 on the first round).
    pub prev_lip: f64,
    pub prev_inv_eta_sq: f64,
    pub prev_sum_norm: f64,
}

impl LearnerState {
    pub fn new(dim: usize) -> Self {
        LearnerState {
            t: 0,
            grad_sum: Point::zeros(dim),
            sum_sq_acc: StableSum::default(),
            sum_norm_acc: StableSum::default(),
            max_partial_sum_norm: 0.0,
            lip: 0.0,
            inv_eta_sq: 0.0,
            inv_eta_plus_sq: 0.0,
            a: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.grad_sum.dim()
    }

    /// Sum of squared gradient norms through round t.
    pub fn sum_sq(&self) -> f64 {
        self.sum_sq_acc.value()
    }

    /// Sum of gradient norms through round t.
    pub fn sum_norm(&self) -> f64 {
        self.sum_norm_acc.value()
    }

    /// eta_t, or +inf before the first nonzero gradient.
    pub fn eta(&self) -> f64 {
        if self.inv_eta_sq > 0.0 {
            1.0 / self.inv_eta_sq.sqrt()
        } else {
            f64::INFINITY
        }
    }

    pub fn inv_eta(&self) -> f64 {
        self.inv_eta_sq.sqrt()
    }

    pub fn inv_eta_plus(&self) -> f64 {
        self.inv_eta_plus_sq.sqrt()
    }
}

/// Absorbs one subgradient into the state, applying the recursions in
/// dependency order: gradient accumulators, then the shadow inverse rate
/// (which reads the previous 1/eta^2 and previous L), then L_t, then
/// 1/eta_t^2, then a_t. A zero gradient only advances the round counter.
pub fn update_state(s: &LearnerState, g: &Point) -> Result<(LearnerState, RoundDelta), CoreError> {
    if g.dim() != s.dim() {
        return Err(CoreError::DimMismatch {
            expected: s.dim(),
            got: g.dim(),
        });
    }
    let g_norm = norm(g);
    if !g_norm.is_finite() {
        return Err(CoreError::NonFinite(0));
    }

    let mut next = s.clone();
    next.t = s.t + 1;
    next.grad_sum.add_assign(g)?;
    next.sum_sq_acc.add(g_norm * g_norm);
    next.sum_norm_acc.add(g_norm);
    let partial = norm(&next.grad_sum);
    next.max_partial_sum_norm = s.max_partial_sum_norm.max(partial);

    // Shadow update first: it reads the previous 1/eta^2 and previous L.
    // On round 1 the convention L_0 = L_1 applies.
    let shadow_prev_lip = if s.t == 0 { s.lip.max(g_norm) } else { s.lip };
    next.inv_eta_plus_sq = f64::max(
        s.inv_eta_sq + 2.0 * g_norm * g_norm.min(shadow_prev_lip),
        shadow_prev_lip * partial,
    );

    next.lip = s.lip.max(g_norm);
    next.inv_eta_sq = f64::max(s.inv_eta_sq + 2.0 * g_norm * g_norm, next.lip * partial);
    if next.lip > 0.0 {
        next.a = s.a.max(next.inv_eta_sq / (next.lip * next.lip));
    }

    Ok((
        next,
        RoundDelta {
            g_norm,
            shadow_prev_lip,
            prev_lip: s.lip,
            prev_inv_eta_sq: s.inv_eta_sq,
            prev_sum_norm: s.sum_norm(),
        },
    ))
}

/// One named inequality check with its measured slack (negative = violated).
#[derive(Debug, Clone)]
pub struct InvariantCheck {
    pub name: &'static str,
    pub pass: bool,
    /// Smallest margin observed; slack is normalized by the comparison scale.
    pub slack: f64,
}

fn check_le(name: &'static str, lhs: f64, rhs: f64) -> InvariantCheck {
    // lhs <= rhs up to relative tolerance.
    let scale = 1.0f64.max(lhs.abs()).max(rhs.abs());
    let slack = (rhs - lhs) / scale;
    InvariantCheck {
        name,
        pass: slack >= -CHECK_REL_TOL,
        slack,
    }
}

/// The state-level inequality checks: monotonicity of the three running
/// maxima, the two inverse-rate upper bounds, the `a_t` sandwich, and
/// shadow-vs-main domination. `prev` is the state before the last update.
pub fn check_state_invariants(prev: &LearnerState, s: &LearnerState) -> Vec<InvariantCheck> {
    let mut out = Vec::with_capacity(8);
    out.push(check_le("inv_eta_sq nondecreasing", prev.inv_eta_sq, s.inv_eta_sq));
    out.push(check_le("a nondecreasing", prev.a, s.a));
    out.push(check_le("lip nondecreasing", prev.lip, s.lip));
    out.push(check_le(
        "inv_eta_sq <= 2 lip sum_norm",
        s.inv_eta_sq,
        2.0 * s.lip * s.sum_norm(),
    ));
    out.push(check_le(
        "inv_eta_sq <= 2 sum_sq + lip max_partial",
        s.inv_eta_sq,
        2.0 * s.sum_sq() + s.lip * s.max_partial_sum_norm,
    ));
    if s.lip > 0.0 {
        out.push(check_le(
            "a lower sandwich (a >= 2 sum_sq / lip^2)",
            2.0 * s.sum_sq() / (s.lip * s.lip),
            s.a,
        ));
        out.push(check_le(
            "a upper sandwich (a <= 2 sum_norm / lip)",
            s.a,
            2.0 * s.sum_norm() / s.lip,
        ));
    }
    out.push(check_le(
        "shadow inv_eta_plus_sq <= inv_eta_sq",
        s.inv_eta_plus_sq,
        s.inv_eta_sq,
    ));
    out
}

/// The per-round shadow increment inequalities (two-sided) and the shadow
/// rate cap. Checked only when the previous running maximum is positive.
pub fn check_shadow_increment(
    prev: &LearnerState,
    s: &LearnerState,
    delta: &RoundDelta,
) -> Vec<InvariantCheck> {
    let mut out = Vec::new();
    if delta.prev_lip > 0.0 {
        let inv_plus = s.inv_eta_plus();
        let eta_plus = 1.0 / inv_plus;
        let increment = inv_plus - prev.inv_eta();
        out.push(check_le(
            "shadow increment upper (2|g| L_{t-1} eta+)",
            increment,
            2.0 * delta.g_norm * delta.prev_lip * eta_plus,
        ));
        out.push(check_le(
            "shadow increment lower (|g| min(|g|,L) eta+)",
            delta.g_norm * delta.g_norm.min(delta.prev_lip) * eta_plus,
            increment,
        ));
        out.push(check_le(
            "shadow rate cap (1/eta+ <= sqrt(2 L sum_norm' + 2 L L'))",
            inv_plus,
            (2.0 * s.lip * delta.prev_sum_norm + 2.0 * s.lip * delta.prev_lip).sqrt(),
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(v: &[f64]) -> Point {
        Point::new(v.to_vec()).unwrap()
    }

    #[test]
    fn norm_pythagorean() {
        assert_eq!(norm(&pt(&[3.0, 4.0])), 5.0);
    }

    #[test]
    fn norm_zero_vector_exact() {
        assert_eq!(norm(&pt(&[0.0, 0.0, 0.0])), 0.0);
    }

    #[test]
    fn norm_fifty_ones() {
        let p = Point::new(vec![1.0; 50]).unwrap();
        // sqrt(50) evaluated at arbitrary precision, rounded to nearest f64.
        assert!((norm(&p) - 7.071067811865475).abs() < 1e-14);
    }

    #[test]
    fn non_finite_rejected() {
        assert_eq!(
            Point::new(vec![1.0, f64::NAN]),
            Err(CoreError::NonFinite(1))
        );
        assert_eq!(
            Point::new(vec![f64::INFINITY]),
            Err(CoreError::NonFinite(0))
        );
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let s = LearnerState::new(2);
        let err = update_state(&s, &pt(&[1.0])).unwrap_err();
        assert_eq!(err, CoreError::DimMismatch { expected: 2, got: 1 });
    }

    // Hand evaluation of the Definition-4 recursion on the unit scalar
    // sequence, re-derived independently in a spreadsheet.
    #[test]
    fn unit_scalar_recursion() {
        let s0 = LearnerState::new(1);
        let (s1, _) = update_state(&s0, &pt(&[1.0])).unwrap();
        assert_eq!(s1.inv_eta_sq, 2.0); // max(0 + 2, 1*1)
        assert_eq!(s1.a, 2.0); // 1/(1^2 * 1/2)
        assert_eq!(s1.inv_eta_plus_sq, 2.0); // L_0 = L_1 convention

        let (s2, _) = update_state(&s1, &pt(&[1.0])).unwrap();
        assert_eq!(s2.inv_eta_sq, 4.0); // max(2 + 2, 1*2)
        assert_eq!(s2.a, 4.0); // max(2, 1/(1 * 1/4))
        assert_eq!(s2.lip, 1.0);
    }

    #[test]
    fn zero_gradient_is_noop_except_counter() {
        let s0 = LearnerState::new(1);
        let (s1, _) = update_state(&s0, &pt(&[1.0])).unwrap();
        let (s2, _) = update_state(&s1, &pt(&[0.0])).unwrap();
        assert_eq!(s2.t, 2);
        assert_eq!(s2.lip, s1.lip);
        assert_eq!(s2.inv_eta_sq, s1.inv_eta_sq);
        assert_eq!(s2.a, s1.a);
        assert_eq!(s2.inv_eta_plus_sq, s1.inv_eta_plus_sq);
        assert_eq!(s2.grad_sum, s1.grad_sum);
    }

    #[test]
    fn leading_zero_gradient_keeps_a_at_zero() {
        let s0 = LearnerState::new(1);
        let (s1, _) = update_state(&s0, &pt(&[0.0])).unwrap();
        assert_eq!(s1.a, 0.0);
        assert_eq!(s1.inv_eta_sq, 0.0);
        let (s2, _) = update_state(&s1, &pt(&[2.0])).unwrap();
        assert_eq!(s2.inv_eta_sq, 8.0);
        assert_eq!(s2.a, 2.0);
    }

    #[test]
    fn stable_sum_matches_exact_small_ints() {
        let mut acc = StableSum::default();
        for _ in 0..1000 {
            acc.add(1.0);
        }
        assert_eq!(acc.value(), 1000.0);
    }

    // After an abrupt jump in the running maximum, `a` keeps its old value
    // while 2*sum_norm/lip collapses, so only the envelope over prefixes
    // bounds it: a_t <= 2 max_{s<=t} sum_norm_s / lip_s.
    #[test]
    fn a_respects_prefix_envelope_across_jumps() {
        let mut s = LearnerState::new(1);
        let mut envelope: f64 = 0.0;
        for g in [1.0, 1.0, 1.0, 1.0, 2.0, 1.0, 50.0, 0.5] {
            let (next, _) = update_state(&s, &pt(&[g])).unwrap();
            s = next;
            envelope = envelope.max(2.0 * s.sum_norm() / s.lip);
            assert!(s.a <= envelope * (1.0 + 1e-12));
            assert!(s.a >= 2.0 * s.sum_sq() / (s.lip * s.lip) * (1.0 - 1e-12));
        }
        // The strict per-round upper bound does not survive the 1,1,1,1,2
        // prefix: a stays at 8 while 2*sum_norm/lip drops to 6.
        let mut s = LearnerState::new(1);
        for g in [1.0, 1.0, 1.0, 1.0, 2.0] {
            let (next, _) = update_state(&s, &pt(&[g])).unwrap();
            s = next;
        }
        assert_eq!(s.a, 8.0);
        assert_eq!(2.0 * s.sum_norm() / s.lip, 6.0);
    }
}
