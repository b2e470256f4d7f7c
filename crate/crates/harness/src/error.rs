use thiserror::Error;

use dynregret::complexity::ComplexityError;
use dynregret::game::{GameError, StrategyError};
use dynregret::regret::EvalError;
use dynregret::rollout::RolloutError;

/// Failure of a harness command. Each variant maps to one exit status.
#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error at `{key}`: {message}")]
    Config { key: String, message: String },
    #[error("capability error: {0}")]
    Capability(String),
    #[error("budget exceeded: {required:.3e} enumeration steps required, limit {limit:.3e}")]
    Budget { required: f64, limit: f64 },
    #[error("i/o error: {0}")]
    Io(String),
    #[error("runtime error: {0}")]
    Runtime(String),
}

impl HarnessError {
    pub fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        HarnessError::Config { key: key.into(), message: message.into() }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            HarnessError::Config { .. } => 2,
            HarnessError::Capability(_) => 3,
            HarnessError::Budget { .. } => 4,
            HarnessError::Io(_) | HarnessError::Runtime(_) => 1,
        }
    }
}

impl From<std::io::Error> for HarnessError {
    fn from(e: std::io::Error) -> Self {
        HarnessError::Io(e.to_string())
    }
}

impl From<csv::Error> for HarnessError {
    fn from(e: csv::Error) -> Self {
        HarnessError::Io(e.to_string())
    }
}

impl From<StrategyError> for HarnessError {
    fn from(e: StrategyError) -> Self {
        match e {
            StrategyError::Capability(c) => HarnessError::Capability(c.to_string()),
            other => HarnessError::Runtime(other.to_string()),
        }
    }
}

impl From<GameError> for HarnessError {
    fn from(e: GameError) -> Self {
        match e {
            GameError::InvalidPolicy { .. } => HarnessError::Capability(e.to_string()),
            GameError::Learner { source: StrategyError::Capability(_), .. }
            | GameError::Adversary { source: StrategyError::Capability(_), .. } => HarnessError::Capability(e.to_string()),
            other => HarnessError::Runtime(other.to_string()),
        }
    }
}

impl From<RolloutError> for HarnessError {
    fn from(e: RolloutError) -> Self {
        match e {
            RolloutError::Capability(_) => HarnessError::Capability(e.to_string()),
            other => HarnessError::Runtime(other.to_string()),
        }
    }
}

impl From<EvalError> for HarnessError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Game(g) => g.into(),
            EvalError::Rollout(r) => r.into(),
            EvalError::Search(s) => HarnessError::Runtime(s.to_string()),
        }
    }
}

impl From<ComplexityError> for HarnessError {
    fn from(e: ComplexityError) -> Self {
        match e {
            ComplexityError::Budget { required, limit } => HarnessError::Budget { required, limit },
            ComplexityError::Capability(_) => HarnessError::Capability(e.to_string()),
            ComplexityError::Rollout(r) => r.into(),
            other => HarnessError::Runtime(other.to_string()),
        }
    }
}
