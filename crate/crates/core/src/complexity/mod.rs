//! Complexity terms of the regret bounds and small-instance oracles.
//!
//! Sequential Rademacher complexity is estimated exactly on tiny finite
//! instances and by Monte Carlo on larger ones. Bound reports itemize the
//! stability, Rademacher, regularization and mixing-gap terms.

mod bounds;
mod minimax;
mod rademacher;
mod slope;
mod tree;

use thiserror::Error;

use crate::game::CapabilityError;
use crate::rollout::RolloutError;

pub use bounds::{bound_ergodic, bound_main, bound_minibatch, mixing_gap_profile, BoundKind, BoundReport};
pub use minimax::{
    mixed_value_single_round, pure_minimax_oracle, MixedValue, OracleValue, FICTITIOUS_PLAY_CAP, MIXED_SIZE_CAP,
    ORACLE_BUDGET,
};
pub use rademacher::{
    finite_class_sup, linear_ball_sup, seq_rademacher_exhaustive, seq_rademacher_exhaustive_with, seq_rademacher_mc,
    unit_ball_rademacher, ExhaustiveValue, McConfig, McEstimate, EXHAUSTIVE_BUDGET,
};
pub use slope::{slope_fit, SlopeFit};
pub use tree::{RademacherTree, Sign};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ComplexityError {
    #[error("enumeration needs {required:e} evaluations, budget is {limit:e}")]
    Budget { required: f64, limit: f64 },
    #[error("{name} must be nonnegative, got {value}")]
    Negative { name: &'static str, value: f64 },
    #[error("the τ grid is empty")]
    EmptyGrid,
    #[error("{0}")]
    Input(String),
    #[error(transparent)]
    Rollout(#[from] RolloutError),
    #[error(transparent)]
    Capability(#[from] CapabilityError),
}
