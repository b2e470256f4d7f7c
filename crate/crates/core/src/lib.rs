pub mod complexity;
pub mod control;
pub mod discrete;
pub mod game;
pub mod linalg;
pub mod regret;
pub mod rng;
pub mod rollout;
pub mod search;
pub mod strategies;
