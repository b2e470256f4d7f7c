//! Learners and adversaries.
//!
//! ERM-type learners follow the leader on realized history; their stability
//! is measured by the regret module rather than assumed.

mod expweights;
mod fixed;
mod ftpl;
mod minibatch;
mod oblivious;
mod special;
mod switching;
mod tree;

pub use expweights::{softmax_weights, ExpWeightsMdp};
pub use fixed::FixedPolicy;
pub use ftpl::Ftpl;
pub use minibatch::MinibatchErm;
pub use oblivious::{IidAdversary, ObliviousSequence};
pub use special::{IsotronErm, TrackingErm};
pub use switching::{orthogonal_unit_vector, SwitchEvent, SwitchingAdversary};
pub use tree::RademacherTreeAdversary;

use crate::game::StrategyError;
use crate::regret::EvalError;

pub(crate) fn eval_error(e: EvalError) -> StrategyError {
    match e {
        EvalError::Search(s) => StrategyError::Search(s),
        other => StrategyError::Invalid(other.to_string()),
    }
}
