//! Property tests over randomized inputs: the recursion invariants, the
//! trace format's bit-exact round trip, and the log-domain magnitude algebra.

use freegret::core::{check_shadow_increment, check_state_invariants, update_state, LearnerState};
use freegret::magnitude::LogMag;
use freegret::regularizers::{PhiProfile, RadialPhi};
use freegret::trace::{format_trace, parse_trace};
use freegret::Point;
use proptest::prelude::*;

/// Gaussian-ish draws from two uniforms, scaled per sequence. Constant-scale
/// sequences keep the per-round a sandwich tight but valid.
fn gaussian_sequence(dim: usize) -> impl Strategy<Value = (f64, Vec<Vec<f64>>)> {
    let scale = (-3.0f64..3.0).prop_map(|e| 10f64.powf(e));
    let draws = proptest::collection::vec(
        proptest::collection::vec((1e-9f64..1.0, 0.0f64..1.0), dim),
        1..300,
    );
    (scale, draws).prop_map(|(s, rounds)| {
        let seq = rounds
            .into_iter()
            .map(|coords| {
                coords
                    .into_iter()
                    .map(|(u1, u2)| {
                        s * (-2.0 * u1.ln()).sqrt()
                            * (2.0 * std::f64::consts::PI * u2).cos()
                    })
                    .collect()
            })
            .collect();
        (s, seq)
    })
}

/// Arbitrary bounded sequences, jumps included.
fn arbitrary_sequence(dim: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    proptest::collection::vec(
        proptest::collection::vec(-1e3f64..1e3, dim),
        1..200,
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    // Gaussian streams across dims and scales: every state inequality holds
    // after every round. The per-round a upper bound is implied exactly on
    // rounds that attain the prefix envelope max_s(2 sum_norm_s / lip_s),
    // which is where it is asserted; a property searcher can manufacture
    // repeat-then-jump draws that leave the envelope behind, and there only
    // the envelope form is a theorem.
    #[test]
    fn state_invariants_hold_on_gaussian_streams(
        (_s, seq) in prop_oneof![gaussian_sequence(1), gaussian_sequence(5), gaussian_sequence(20)]
    ) {
        let dim = seq[0].len();
        let mut state = LearnerState::new(dim);
        let mut envelope = 0.0f64;
        for coords in seq {
            let g = Point::new(coords).unwrap();
            let (next, delta) = update_state(&state, &g).unwrap();
            let at_envelope = next.lip > 0.0
                && 2.0 * next.sum_norm() / next.lip >= envelope;
            for c in check_state_invariants(&state, &next) {
                if c.name == "a upper sandwich (a <= 2 sum_norm / lip)" {
                    if at_envelope {
                        prop_assert!(c.pass, "{} slack {}", c.name, c.slack);
                    }
                } else {
                    prop_assert!(c.pass, "{} slack {}", c.name, c.slack);
                }
            }
            for c in check_shadow_increment(&state, &next, &delta) {
                prop_assert!(c.pass, "{} slack {}", c.name, c.slack);
            }
            if next.lip > 0.0 {
                envelope = envelope.max(2.0 * next.sum_norm() / next.lip);
                prop_assert!(next.a <= envelope * (1.0 + 1e-9));
            }
            state = next;
        }
    }

    // Arbitrary sequences (abrupt jumps allowed): monotonicity, the rate
    // bounds, the a lower bound, and the prefix-envelope upper bound all
    // survive; the strict per-round upper bound is exactly the one that
    // does not, so it is excluded here.
    #[test]
    fn envelope_invariants_hold_on_arbitrary_streams(seq in arbitrary_sequence(2)) {
        let mut state = LearnerState::new(2);
        let mut envelope = 0.0f64;
        for coords in seq {
            let g = Point::new(coords).unwrap();
            let (next, delta) = update_state(&state, &g).unwrap();
            prop_assert!(next.inv_eta_sq >= state.inv_eta_sq);
            prop_assert!(next.a >= state.a);
            prop_assert!(next.lip >= state.lip);
            for c in check_state_invariants(&state, &next) {
                if c.name != "a upper sandwich (a <= 2 sum_norm / lip)" {
                    prop_assert!(c.pass, "{} slack {}", c.name, c.slack);
                }
            }
            for c in check_shadow_increment(&state, &next, &delta) {
                prop_assert!(c.pass, "{} slack {}", c.name, c.slack);
            }
            if next.lip > 0.0 {
                envelope = envelope.max(2.0 * next.sum_norm() / next.lip);
                prop_assert!(next.a <= envelope * (1.0 + 1e-9));
            }
            state = next;
        }
    }

    #[test]
    fn trace_round_trip_is_bit_exact(
        rows in proptest::collection::vec(
            proptest::collection::vec(-1e300f64..1e300, 3),
            1..40,
        )
    ) {
        let gradients: Vec<Point> = rows
            .into_iter()
            .map(|coords| Point::new(coords).unwrap())
            .collect();
        let text = format_trace(&gradients);
        let back = parse_trace(&text).unwrap();
        prop_assert_eq!(back.len(), gradients.len());
        for (a, b) in gradients.iter().zip(&back) {
            for (x, y) in a.coords().iter().zip(b.coords()) {
                prop_assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn logmag_algebra_consistent(a in 1e-6f64..1e6, b in 1e-6f64..1e6) {
        let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
        let sum = LogMag::from_value(hi).add(LogMag::from_value(lo));
        prop_assert!((sum.value() - (hi + lo)).abs() <= 1e-9 * (hi + lo));
        let diff = LogMag::from_value(hi).sub(LogMag::from_value(lo));
        match diff {
            Some(d) if hi > lo => {
                prop_assert!((d.value() - (hi - lo)).abs() <= 1e-9 * hi);
            }
            Some(d) => prop_assert!(d.is_zero()),
            None => prop_assert!(false, "sub of smaller from larger failed"),
        }
    }

    // The integral representation stays between its two closed-form
    // envelopes for any gamma in the admissible range.
    #[test]
    fn phi_envelopes_hold(gamma in 0.51f64..1.0, x in 1e-3f64..1e5) {
        let p = PhiProfile::new(gamma);
        let v = p.phi(x).unwrap();
        let l = x.ln_1p().powf(gamma);
        prop_assert!(v >= 0.5 * x * l * (1.0 - 1e-8), "lo: {v} vs {}", 0.5 * x * l);
        prop_assert!(v <= x * l * (1.0 + 1e-8), "hi: {v} vs {}", x * l);
    }
}
