//! Finite and low-dimensional environments: online MDPs, single-index
//! regression with a moving offset, the linear switching-cost instance,
//! a switching-cost wrapper with a sign channel, and tabular games.

pub mod isotron;
pub mod lin_lower;
pub mod mdp;
pub mod memory;
pub mod tabular;

pub use isotron::{isotron_erm, isotron_loss, isotron_next_state, IsotronEnv, IsotronInstance, IsotronOracle, IsotronPolicy, Link};
pub use lin_lower::{lin_lower_best_response, lin_lowerbound_loss, LinLowerBoundEnv, LinLowerOracle, UnitBall};
pub use mdp::{
    deterministic_policies, mdp_induced_transition, mdp_stationary_distribution, mdp_stationary_loss, MdpEnv, MdpError,
    MdpPolicy, MdpSystem,
};
pub use memory::{MemoryWrapper, SignChannel, SignedInstance};
pub use tabular::TabularGame;
