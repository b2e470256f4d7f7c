//! Protocol types and the game loop.
//!
//! Round `t` runs in a fixed order. The learner commits `π_t` from its own
//! substream. The adversary may then read the learner's declared action and
//! emits `(z_t, ζ_t)`. The loss `ℓ(π_t, x_t, z_t)` is charged, and the state
//! moves to `Φ(x_t, π_t, ζ_t) + w_t` with `w_t` drawn from the noise
//! substream of round `t`. Both players then observe `(z_t, ζ_t)`.

use std::fmt;

use rand::RngCore;
use thiserror::Error;

use crate::rng::{stream, Purpose, StreamId};
use crate::search::SearchError;

/// A stateful online-learning environment: state space, dynamics, noise and
/// loss.
///
/// The `Law` type describes the distribution of the state exactly when the
/// environment can propagate it in closed form (the state itself for
/// deterministic dynamics, a second-moment matrix for Gaussian linear
/// systems, a probability vector for finite chains).
pub trait Environment {
    type State: Clone + fmt::Debug;
    type Policy: Clone + fmt::Debug + PartialEq;
    type LossInstance: Clone + fmt::Debug;
    type DynInstance: Clone + fmt::Debug;
    type Law: Clone + fmt::Debug;

    fn name(&self) -> String;

    /// Draws `x_1`. Environments with a fixed start ignore `rng`.
    fn initial_state(&self, rng: &mut dyn RngCore) -> Self::State;

    /// `Φ(x, π, ζ) + w` with `w` drawn from `rng`.
    fn step(
        &self,
        state: &Self::State,
        policy: &Self::Policy,
        zeta: &Self::DynInstance,
        rng: &mut dyn RngCore,
    ) -> Self::State;

    fn loss(&self, policy: &Self::Policy, state: &Self::State, z: &Self::LossInstance) -> f64;

    /// `B` such that every loss satisfies `|ℓ| ≤ B`.
    fn loss_bound(&self) -> f64;

    /// True when the noise is degenerate.
    fn is_deterministic(&self) -> bool;

    fn check_policy(&self, policy: &Self::Policy) -> Result<(), String>;
    fn check_loss_instance(&self, z: &Self::LossInstance) -> Result<(), String>;
    fn check_dyn_instance(&self, zeta: &Self::DynInstance) -> Result<(), String>;

    /// Short stable identifier used in logs and CSV output.
    fn policy_label(&self, policy: &Self::Policy) -> String;

    /// Whether `initial_law`/`law_loss`/`law_step` are available.
    fn has_exact_law(&self) -> bool;
    fn initial_law(&self) -> Self::Law;
    /// `E[ℓ(π, x, z)]` for `x` distributed as `law`.
    fn law_loss(&self, policy: &Self::Policy, law: &Self::Law, z: &Self::LossInstance) -> f64;
    /// Law of `Φ(x, π, ζ) + w` for `x` distributed as `law`.
    fn law_step(&self, law: &Self::Law, policy: &Self::Policy, zeta: &Self::DynInstance) -> Self::Law;

    /// `ℓ*(π, z)`, the limit of the loss when `π` is repeated forever.
    fn stationary_loss(&self, _policy: &Self::Policy, _z: &Self::LossInstance) -> Result<f64, CapabilityError> {
        Err(CapabilityError::NoStationaryLoss(self.name()))
    }

    /// `z_a + z_b` when the stationary loss is linear in the instance, so
    /// that `Σ_s ℓ*(π, z_s) = ℓ*(π, Σ_s z_s)`.
    fn combine_instances(&self, _a: &Self::LossInstance, _b: &Self::LossInstance) -> Option<Self::LossInstance> {
        None
    }
}

/// A feature the environment does not provide.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum CapabilityError {
    #[error("environment `{0}` exposes no stationary loss")]
    NoStationaryLoss(String),
    #[error("{0}")]
    Unsupported(String),
}

/// What a learner reveals about round `t` before the adversary moves.
#[derive(Debug, Clone, PartialEq)]
pub enum DeclaredAction<P> {
    Deterministic(P),
    /// Mean of the learner's randomized choice in parameter coordinates.
    MixtureMean { mean: Vec<f64>, draws: usize },
}

/// Failure inside a learner or an adversary.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum StrategyError {
    #[error("search failed: {0}")]
    Search(#[from] SearchError),
    #[error(transparent)]
    Capability(#[from] CapabilityError),
    #[error("{0}")]
    Invalid(String),
}

pub trait Learner<E: Environment> {
    fn id(&self) -> String;

    /// Commits `π_t`. Must depend only on rounds `1..t` observed so far and
    /// on `rng`.
    fn act(&mut self, env: &E, t: usize, rng: &mut dyn RngCore) -> Result<E::Policy, StrategyError>;

    /// Description of the round-`t` choice; called after [`Learner::act`].
    fn declared_action(&mut self, env: &E, t: usize) -> Result<DeclaredAction<E::Policy>, StrategyError>;

    fn observe(
        &mut self,
        env: &E,
        t: usize,
        z: &E::LossInstance,
        zeta: &E::DynInstance,
    ) -> Result<(), StrategyError>;
}

pub trait Adversary<E: Environment> {
    fn id(&self) -> String;

    fn needs_declared_action(&self) -> bool {
        false
    }

    fn emit(
        &mut self,
        env: &E,
        t: usize,
        declared: Option<&DeclaredAction<E::Policy>>,
        rng: &mut dyn RngCore,
    ) -> Result<(E::LossInstance, E::DynInstance), StrategyError>;

    fn observe(&mut self, _env: &E, _t: usize, _played: &E::Policy, _z: &E::LossInstance, _zeta: &E::DynInstance) {}
}

impl<E: Environment, L: Learner<E> + ?Sized> Learner<E> for Box<L> {
    fn id(&self) -> String {
        (**self).id()
    }
    fn act(&mut self, env: &E, t: usize, rng: &mut dyn RngCore) -> Result<E::Policy, StrategyError> {
        (**self).act(env, t, rng)
    }
    fn declared_action(&mut self, env: &E, t: usize) -> Result<DeclaredAction<E::Policy>, StrategyError> {
        (**self).declared_action(env, t)
    }
    fn observe(&mut self, env: &E, t: usize, z: &E::LossInstance, zeta: &E::DynInstance) -> Result<(), StrategyError> {
        (**self).observe(env, t, z, zeta)
    }
}

impl<E: Environment, A: Adversary<E> + ?Sized> Adversary<E> for Box<A> {
    fn id(&self) -> String {
        (**self).id()
    }
    fn needs_declared_action(&self) -> bool {
        (**self).needs_declared_action()
    }
    fn emit(
        &mut self,
        env: &E,
        t: usize,
        declared: Option<&DeclaredAction<E::Policy>>,
        rng: &mut dyn RngCore,
    ) -> Result<(E::LossInstance, E::DynInstance), StrategyError> {
        (**self).emit(env, t, declared, rng)
    }
    fn observe(&mut self, env: &E, t: usize, played: &E::Policy, z: &E::LossInstance, zeta: &E::DynInstance) {
        (**self).observe(env, t, played, z, zeta)
    }
}

/// Substreams consumed in one round.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RoundStreams {
    pub learner: StreamId,
    pub adversary: StreamId,
    pub noise: StreamId,
}

/// One logged round.
pub struct RoundEntry<E: Environment> {
    pub t: usize,
    pub policy: E::Policy,
    pub declared: Option<DeclaredAction<E::Policy>>,
    pub loss_instance: E::LossInstance,
    pub dyn_instance: E::DynInstance,
    /// `x_t`, the state at which the round's loss was charged.
    pub state: E::State,
    pub loss: f64,
    pub streams: RoundStreams,
}

impl<E: Environment> Clone for RoundEntry<E> {
    fn clone(&self) -> Self {
        RoundEntry {
            t: self.t,
            policy: self.policy.clone(),
            declared: self.declared.clone(),
            loss_instance: self.loss_instance.clone(),
            dyn_instance: self.dyn_instance.clone(),
            state: self.state.clone(),
            loss: self.loss,
            streams: self.streams,
        }
    }
}

impl<E: Environment> fmt::Debug for RoundEntry<E> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RoundEntry")
            .field("t", &self.t)
            .field("policy", &self.policy)
            .field("declared", &self.declared)
            .field("loss_instance", &self.loss_instance)
            .field("dyn_instance", &self.dyn_instance)
            .field("state", &self.state)
            .field("loss", &self.loss)
            .field("streams", &self.streams)
            .finish()
    }
}

/// Complete log of one game.
pub struct GameRecord<E: Environment> {
    pub horizon: usize,
    pub entries: Vec<RoundEntry<E>>,
    /// `x_{T+1}`.
    pub final_state: E::State,
    pub learner_id: String,
    pub adversary_id: String,
    pub seed: u64,
    pub run: u64,
}

impl<E: Environment> Clone for GameRecord<E> {
    fn clone(&self) -> Self {
        GameRecord {
            horizon: self.horizon,
            entries: self.entries.clone(),
            final_state: self.final_state.clone(),
            learner_id: self.learner_id.clone(),
            adversary_id: self.adversary_id.clone(),
            seed: self.seed,
            run: self.run,
        }
    }
}

impl<E: Environment> fmt::Debug for GameRecord<E> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GameRecord")
            .field("horizon", &self.horizon)
            .field("learner_id", &self.learner_id)
            .field("adversary_id", &self.adversary_id)
            .field("seed", &self.seed)
            .field("run", &self.run)
            .field("entries", &self.entries)
            .field("final_state", &self.final_state)
            .finish()
    }
}

impl<E: Environment> GameRecord<E> {
    pub fn policies(&self) -> Vec<E::Policy> {
        self.entries.iter().map(|e| e.policy.clone()).collect()
    }

    pub fn loss_instances(&self) -> Vec<E::LossInstance> {
        self.entries.iter().map(|e| e.loss_instance.clone()).collect()
    }

    pub fn dyn_instances(&self) -> Vec<E::DynInstance> {
        self.entries.iter().map(|e| e.dyn_instance.clone()).collect()
    }

    pub fn realized_losses(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.loss).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GameError {
    #[error("horizon must be at least 1")]
    EmptyHorizon,
    #[error("round {round}: adversary instance rejected: {reason}")]
    InvalidInstance { round: usize, reason: String },
    #[error("round {round}: learner policy rejected: {reason}")]
    InvalidPolicy { round: usize, reason: String },
    #[error("round {round}: loss {loss} outside the declared bound {bound}")]
    LossOutOfBound { round: usize, loss: f64, bound: f64 },
    #[error("round {round}: learner failed: {source}")]
    Learner { round: usize, source: StrategyError },
    #[error("round {round}: adversary failed: {source}")]
    Adversary { round: usize, source: StrategyError },
}

/// Slack allowed when checking `|ℓ| ≤ B`.
const LOSS_BOUND_SLACK: f64 = 1e-9;

/// Runs `horizon` rounds as run index 0 of `seed`.
pub fn run_game<E, L, A>(
    env: &E,
    learner: &mut L,
    adversary: &mut A,
    horizon: usize,
    seed: u64,
) -> Result<GameRecord<E>, GameError>
where
    E: Environment,
    L: Learner<E> + ?Sized,
    A: Adversary<E> + ?Sized,
{
    run_game_indexed(env, learner, adversary, horizon, seed, 0)
}

/// Runs `horizon` rounds drawing every substream under run index `run`.
pub fn run_game_indexed<E, L, A>(
    env: &E,
    learner: &mut L,
    adversary: &mut A,
    horizon: usize,
    seed: u64,
    run: u64,
) -> Result<GameRecord<E>, GameError>
where
    E: Environment,
    L: Learner<E> + ?Sized,
    A: Adversary<E> + ?Sized,
{
    if horizon == 0 {
        return Err(GameError::EmptyHorizon);
    }
    let mut state = env.initial_state(&mut stream(seed, run, 0, Purpose::InitialState));
    let bound = env.loss_bound();
    let mut entries = Vec::with_capacity(horizon);
    for t in 1..=horizon {
        let round = t as u64;
        let streams = RoundStreams {
            learner: StreamId::new(run, round, Purpose::Learner),
            adversary: StreamId::new(run, round, Purpose::Adversary),
            noise: StreamId::new(run, round, Purpose::Noise),
        };
        let mut learner_rng = stream(seed, run, round, Purpose::Learner);
        let policy = learner
            .act(env, t, &mut learner_rng)
            .map_err(|source| GameError::Learner { round: t, source })?;
        env.check_policy(&policy)
            .map_err(|reason| GameError::InvalidPolicy { round: t, reason })?;
        let declared = if adversary.needs_declared_action() {
            Some(
                learner
                    .declared_action(env, t)
                    .map_err(|source| GameError::Learner { round: t, source })?,
            )
        } else {
            None
        };
        let mut adversary_rng = stream(seed, run, round, Purpose::Adversary);
        let (z, zeta) = adversary
            .emit(env, t, declared.as_ref(), &mut adversary_rng)
            .map_err(|source| GameError::Adversary { round: t, source })?;
        env.check_loss_instance(&z)
            .map_err(|reason| GameError::InvalidInstance { round: t, reason })?;
        env.check_dyn_instance(&zeta)
            .map_err(|reason| GameError::InvalidInstance { round: t, reason })?;
        let loss = env.loss(&policy, &state, &z);
        if !loss.is_finite() || loss.abs() > bound + LOSS_BOUND_SLACK {
            return Err(GameError::LossOutOfBound { round: t, loss, bound });
        }
        let mut noise_rng = stream(seed, run, round, Purpose::Noise);
        let next = env.step(&state, &policy, &zeta, &mut noise_rng);
        learner
            .observe(env, t, &z, &zeta)
            .map_err(|source| GameError::Learner { round: t, source })?;
        adversary.observe(env, t, &policy, &z, &zeta);
        entries.push(RoundEntry {
            t,
            policy,
            declared,
            loss_instance: z,
            dyn_instance: zeta,
            state: std::mem::replace(&mut state, next),
            loss,
            streams,
        });
    }
    Ok(GameRecord {
        horizon,
        entries,
        final_state: state,
        learner_id: learner.id(),
        adversary_id: adversary.id(),
        seed,
        run,
    })
}
