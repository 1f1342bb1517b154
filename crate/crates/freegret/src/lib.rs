//! Parameter-free online convex optimization over an unconstrained L2 space:
//! FTRL learners built from the gamma-family of adaptive regularizers, the
//! matching adversarial lower-bound sequence, and evaluators for both sides
//! of the regret frontier so the inequalities can be checked empirically.

pub mod adversary;
pub mod harness;
pub mod core;
pub mod learner;
pub mod losses;
pub mod magnitude;
pub mod regularizers;
pub mod trace;
pub mod verify;

pub use crate::adversary::{
    frontier_lower_bound, scan_warmup, z_value, Adversary, DriftClose, FrontierPoint,
};
pub use crate::core::{norm, update_state, LearnerState, Point};
pub use crate::harness::{run, ExperimentConfig, ResultFile, RunSummary};
pub use crate::losses::{linearize, regret_pair, ConvexLoss};
pub use crate::learner::{
    ftrl_argmin_oracle, predict, shadow_diagnostics, theorem3_bound, theorem8_bound, BoundReport,
    BoundTracker, FtrlLearner, OnlineLearner,
};
pub use crate::magnitude::LogMag;
pub use crate::regularizers::{
    check_adaptive_conditions, h, h_inv, PhiProfile, RegularizerSpec,
};
