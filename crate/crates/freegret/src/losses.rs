//! Convex loss adapters: evaluation and subgradients at the played point,
//! so convex streams reduce to the linear losses the learner consumes. At
//! nondifferentiable points the zero (smallest-norm) subgradient is chosen,
//! which keeps the running gradient maximum as small as possible.

use crate::core::{norm, CoreError, Point};
use crate::learner::{LearnerError, OnlineLearner};

/// The supported convex loss shapes.
#[derive(Debug, Clone)]
pub enum ConvexLoss {
    /// w -> g . w
    Linear(Point),
    /// w -> |w - target| (L2 distance; the scalar absolute loss in 1-d)
    Absolute(Point),
    /// w -> max(0, 1 - label (w . feature))
    Hinge { label: f64, feature: Point },
    /// w -> |w - target|^2
    Squared(Point),
}

impl ConvexLoss {
    pub fn dim(&self) -> usize {
        match self {
            ConvexLoss::Linear(p) | ConvexLoss::Absolute(p) | ConvexLoss::Squared(p) => p.dim(),
            ConvexLoss::Hinge { feature, .. } => feature.dim(),
        }
    }

    pub fn evaluate(&self, w: &Point) -> Result<f64, CoreError> {
        match self {
            ConvexLoss::Linear(g) => g.dot(w),
            ConvexLoss::Absolute(target) => Ok(diff(w, target)?.norm()),
            ConvexLoss::Hinge { label, feature } => {
                Ok((1.0 - label * feature.dot(w)?).max(0.0))
            }
            ConvexLoss::Squared(target) => {
                let d = diff(w, target)?;
                d.dot(&d)
            }
        }
    }
}

fn diff(a: &Point, b: &Point) -> Result<Point, CoreError> {
    let mut d = a.clone();
    d.add_assign(&b.scaled(-1.0))?;
    Ok(d)
}

/// A valid subgradient of the loss at w. Kinks return 0.
pub fn linearize(loss: &ConvexLoss, w: &Point) -> Result<Point, CoreError> {
    match loss {
        ConvexLoss::Linear(g) => Ok(g.clone()),
        ConvexLoss::Absolute(target) => {
            let d = diff(w, target)?;
            let n = norm(&d);
            if n == 0.0 {
                Ok(Point::zeros(w.dim()))
            } else {
                Ok(d.scaled(1.0 / n))
            }
        }
        ConvexLoss::Hinge { label, feature } => {
            let margin = 1.0 - label * feature.dot(w)?;
            if margin > 0.0 {
                Ok(feature.scaled(-label))
            } else {
                Ok(Point::zeros(w.dim()))
            }
        }
        ConvexLoss::Squared(target) => Ok(diff(w, target)?.scaled(2.0)),
    }
}

/// Replays a loss stream through a learner and accounts both regrets against
/// the comparator: the linearized one the theory bounds, and the true convex
/// one it upper-bounds.
#[derive(Debug, Clone, Copy)]
pub struct RegretPair {
    pub linear_regret: f64,
    pub true_regret: f64,
}

pub fn regret_pair(
    losses: &[ConvexLoss],
    learner: &mut dyn OnlineLearner,
    u: &Point,
) -> Result<RegretPair, LearnerError> {
    let mut linear = 0.0;
    let mut true_r = 0.0;
    for loss in losses {
        let w = learner.current_point().clone();
        let g = linearize(loss, &w)?;
        let mut d = w.clone();
        d.add_assign(&u.scaled(-1.0))?;
        linear += g.dot(&d)?;
        true_r += loss.evaluate(&w)? - loss.evaluate(u)?;
        learner.observe(&g)?;
    }
    Ok(RegretPair {
        linear_regret: linear,
        true_regret: true_r,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learner::FtrlLearner;
    use crate::regularizers::RegularizerSpec;

    fn pt(v: &[f64]) -> Point {
        Point::new(v.to_vec()).unwrap()
    }

    #[test]
    fn squared_gradient_is_two_w_at_zero_target() {
        let loss = ConvexLoss::Squared(Point::zeros(2));
        let g = linearize(&loss, &pt(&[2.0, 0.0])).unwrap();
        assert_eq!(g.coords(), &[4.0, 0.0]);
    }

    #[test]
    fn absolute_kink_returns_zero() {
        let loss = ConvexLoss::Absolute(pt(&[3.0]));
        let g = linearize(&loss, &pt(&[3.0])).unwrap();
        assert!(g.is_zero());
    }

    #[test]
    fn active_hinge_subgradient() {
        let loss = ConvexLoss::Hinge {
            label: 1.0,
            feature: pt(&[1.0, 1.0]),
        };
        let g = linearize(&loss, &pt(&[0.0, 0.0])).unwrap();
        assert_eq!(g.coords(), &[-1.0, -1.0]);
        assert_eq!(loss.evaluate(&pt(&[0.0, 0.0])).unwrap(), 1.0);
    }

    #[test]
    fn inactive_hinge_is_flat() {
        let loss = ConvexLoss::Hinge {
            label: 1.0,
            feature: pt(&[1.0]),
        };
        let g = linearize(&loss, &pt(&[5.0])).unwrap();
        assert!(g.is_zero());
    }

    // Subgradient inequality l(y) >= l(w) + g.(y - w) probed on a point
    // lattice; exact up to IEEE rounding of the two evaluations.
    #[test]
    fn subgradient_inequality_on_probes() {
        let losses = vec![
            ConvexLoss::Linear(pt(&[0.7, -1.3])),
            ConvexLoss::Absolute(pt(&[0.5, 2.0])),
            ConvexLoss::Hinge {
                label: -1.0,
                feature: pt(&[1.5, -0.5]),
            },
            ConvexLoss::Squared(pt(&[-1.0, 0.25])),
        ];
        let mut lcg = 0x2545F4914F6CDD1Du64;
        let mut next = || {
            lcg = lcg.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((lcg >> 11) as f64 / (1u64 << 53) as f64) * 8.0 - 4.0
        };
        for loss in &losses {
            for _ in 0..1000 {
                let w = pt(&[next(), next()]);
                let y = pt(&[next(), next()]);
                let g = linearize(loss, &w).unwrap();
                let lw = loss.evaluate(&w).unwrap();
                let ly = loss.evaluate(&y).unwrap();
                let mut d = y.clone();
                d.add_assign(&w.scaled(-1.0)).unwrap();
                let slack = ly - lw - g.dot(&d).unwrap();
                let scale = lw.abs() + ly.abs() + 1.0;
                assert!(
                    slack >= -8.0 * f64::EPSILON * scale,
                    "{loss:?} w={w:?} y={y:?} slack={slack}"
                );
            }
        }
    }

    #[test]
    fn linear_losses_make_regrets_equal() {
        let losses: Vec<ConvexLoss> = [0.5, -1.0, 2.0]
            .iter()
            .map(|&g| ConvexLoss::Linear(pt(&[g])))
            .collect();
        let mut learner = FtrlLearner::new(RegularizerSpec::new(1.0, 1.0).unwrap(), 1);
        let pair = regret_pair(&losses, &mut learner, &pt(&[0.3])).unwrap();
        assert_eq!(pair.linear_regret, pair.true_regret);
    }

    #[test]
    fn squared_losses_reduce_strictly() {
        let mut lcg = 7u64;
        let mut next = || {
            lcg = lcg.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((lcg >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        };
        let losses: Vec<ConvexLoss> = (0..50)
            .map(|_| ConvexLoss::Squared(pt(&[next(), next()])))
            .collect();
        let mut learner = FtrlLearner::new(RegularizerSpec::new(1.0, 1.0).unwrap(), 2);
        let u = pt(&[0.25, -0.5]);
        let pair = regret_pair(&losses, &mut learner, &u).unwrap();
        assert!(pair.true_regret <= pair.linear_regret + 1e-12);
        // Curvature makes the reduction strict once w_t != u somewhere.
        assert!(pair.true_regret < pair.linear_regret);
    }
}
