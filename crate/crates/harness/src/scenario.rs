//! Builds environments, classes, learners and adversaries from a config and
//! runs one `(horizon, repetition)` job.
//!
//! Every job uses the master seed with run index = repetition, so runs at
//! different horizons share their random substreams.

use std::sync::Arc;

use rand::{Rng, RngCore};
use rand_chacha::ChaCha8Rng;

use dynregret::complexity::{
    bound_ergodic, bound_main, bound_minibatch, finite_class_sup, mixing_gap_profile, seq_rademacher_exhaustive,
    seq_rademacher_mc, unit_ball_rademacher, BoundReport, McConfig, RademacherTree,
};
use dynregret::control::{
    BiasBox, CostPair, GainBox, LqrEnv, LqrSystem, TrackingEnv, TrackingPolicy, TrackingSystem,
};
use dynregret::discrete::{
    deterministic_policies, LinLowerBoundEnv, LinLowerOracle, MdpEnv, MdpPolicy, MdpSystem, TabularGame, UnitBall,
};
use dynregret::game::{run_game_indexed, Adversary, Environment, GameRecord, Learner};
use dynregret::linalg::{norm2, Matrix};
use dynregret::regret::{policy_regret, stability_from_record, RegretReport, StabilityMode, StabilityProfile};
use dynregret::rng::{stream, substream_seed, Purpose, StreamId};
use dynregret::rollout::{ExpectationMode, LossModel, RolloutConfig};
use dynregret::search::{grid_candidates, PolicyClass, SearchConfig};
use dynregret::strategies::{
    ExpWeightsMdp, FixedPolicy, Ftpl, IidAdversary, MinibatchErm, ObliviousSequence, SwitchingAdversary, TrackingErm,
};

use crate::config::{
    AdversaryConfig, BoundConfig, BoundKindConfig, EnvironmentConfig, ExperimentConfig, LearnerConfig,
    RademacherSource, Scaled, StabilityKind,
};
use crate::error::HarnessError;

/// Seeds of one repetition.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunSeeds {
    pub master: u64,
    pub rep: u64,
}

impl RunSeeds {
    pub fn rng(&self, purpose: Purpose) -> ChaCha8Rng {
        stream(self.master, self.rep, 0, purpose)
    }

    pub fn derived(&self, purpose: Purpose) -> u64 {
        substream_seed(self.master, StreamId::new(self.rep, 0, purpose))
    }

    pub fn rollout(&self, samples: usize) -> RolloutConfig {
        RolloutConfig { samples, seed: self.derived(Purpose::Particle), mode: ExpectationMode::Auto }
    }
}

/// One row of `rounds.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub t: usize,
    pub policy_id: String,
    pub loss: f64,
    pub cum_loss: f64,
    pub comparator_cum: f64,
    pub regret: f64,
    pub beta: f64,
}

/// Result of one job with everything the writers need.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub run_id: String,
    pub horizon: usize,
    pub rep: usize,
    pub learner_id: String,
    pub adversary_id: String,
    pub comparator_policy: String,
    pub comparator_method: String,
    pub rows: Vec<Row>,
    /// Cumulative learner loss of the last row.
    pub learner_cumulative: f64,
    /// Cumulative comparator loss of the last row.
    pub comparator_cumulative: f64,
    /// `learner_cumulative − comparator_cumulative`.
    pub regret: f64,
    pub stability_sum: f64,
    pub bound: Option<BoundReport>,
    pub rademacher: Option<RademacherEstimate>,
}

/// The typed artifacts of a job, for callers that inspect trajectories.
pub struct JobArtifacts<E: Environment> {
    pub env: E,
    pub record: GameRecord<E>,
    pub report: RegretReport<E::Policy>,
    pub profile: StabilityProfile,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RademacherEstimate {
    pub value: f64,
    pub method: String,
    pub depth: usize,
    /// Confidence interval of Monte Carlo estimates.
    pub interval: Option<(f64, f64)>,
    /// Enumeration steps of exhaustive estimates.
    pub work: Option<f64>,
}

/// A finite game given by explicit policy and instance lists.
pub struct FiniteGame<E: Environment> {
    pub policies: Vec<E::Policy>,
    pub instances: Vec<(E::LossInstance, E::DynInstance)>,
}

/// Environment-specific construction.
pub trait Kit: Sync {
    type Env: Environment + 'static;

    fn config(&self) -> &ExperimentConfig;
    fn build_env(&self, horizon: usize, seeds: &RunSeeds) -> Result<Self::Env, HarnessError>;
    /// The comparator class.
    fn class(&self, env: &Self::Env) -> Result<PolicyClass<Self::Env>, HarnessError>;
    fn learner(
        &self,
        env: &Self::Env,
        horizon: usize,
        seeds: &RunSeeds,
    ) -> Result<Box<dyn Learner<Self::Env>>, HarnessError>;
    fn adversary(
        &self,
        env: &Self::Env,
        horizon: usize,
        seeds: &RunSeeds,
    ) -> Result<Box<dyn Adversary<Self::Env>>, HarnessError>;

    /// Explicit policies and instances, for exact enumeration.
    fn finite_game(&self, _env: &Self::Env) -> Option<FiniteGame<Self::Env>> {
        None
    }

    /// Sampler of tree nodes for Monte Carlo Rademacher estimates.
    #[allow(clippy::type_complexity)]
    fn node_sampler(
        &self,
        _env: &Self::Env,
    ) -> Option<Arc<dyn Fn(&mut ChaCha8Rng) -> (<Self::Env as Environment>::LossInstance, <Self::Env as Environment>::DynInstance) + Send + Sync>>
    {
        None
    }

    /// Whether the unit-ball closed form applies.
    fn unit_ball(&self) -> bool {
        false
    }
}

fn search(cfg: &ExperimentConfig) -> SearchConfig {
    SearchConfig { grid_points: cfg.comparator.grid_points, refine_rounds: cfg.comparator.refine_rounds }
}

fn matrix(key: &str, rows: &[Vec<f64>]) -> Result<Matrix, HarnessError> {
    let cols = rows.first().map_or(0, |r| r.len());
    if rows.is_empty() || cols == 0 || rows.iter().any(|r| r.len() != cols) {
        return Err(HarnessError::config(key, "matrix must be nonempty and rectangular"));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(HarnessError::config(key, "matrix entries must be finite"));
    }
    Ok(Matrix::from_rows(rows))
}

fn block_length(key: &str, block: &Scaled, horizon: usize) -> Result<usize, HarnessError> {
    let v = block.resolve(key, horizon)?;
    if !(v >= 1.0) || v.fract() != 0.0 || !v.is_finite() {
        return Err(HarnessError::config(key, format!("block length must be a positive integer, got {v}")));
    }
    Ok(v as usize)
}

fn unsupported(key: &str, what: &str, env: &str) -> HarnessError {
    HarnessError::config(key, format!("{what} is not available for environment `{env}`"))
}

/// Learners that work for any environment with a gridded or finite class.
fn generic_learner<E: Environment + 'static>(
    cfg: &ExperimentConfig,
    class: PolicyClass<E>,
    ftpl_class: Option<PolicyClass<E>>,
    model: LossModel,
    horizon: usize,
    seeds: &RunSeeds,
) -> Result<Box<dyn Learner<E>>, HarnessError> {
    let rollout = seeds.rollout(cfg.monte_carlo.rollout_samples);
    match &cfg.learner {
        LearnerConfig::Minibatch { block } => {
            let tau = block_length("learner.block", block, horizon)?;
            Ok(Box::new(MinibatchErm::new(tau, class, search(cfg), rollout)?))
        }
        LearnerConfig::Ftpl { rate, grid_points, refine_rounds } => {
            let lambda = rate.resolve("learner.rate", horizon)?;
            if !(lambda > 0.0) {
                return Err(HarnessError::config("learner.rate", "perturbation rate must be positive"));
            }
            let search = SearchConfig {
                grid_points: grid_points.unwrap_or(cfg.comparator.grid_points),
                refine_rounds: refine_rounds.unwrap_or(cfg.comparator.refine_rounds),
            };
            let class = ftpl_class.unwrap_or(class);
            if matches!(class, PolicyClass::Oracle(_)) {
                return Err(HarnessError::config("learner.kind", "perturbed leader needs a finite or gridded class"));
            }
            let ftpl = Ftpl::new(lambda, &class, search, rollout, model)?
                .with_declared_sampling(64, seeds.derived(Purpose::Declared));
            Ok(Box::new(ftpl))
        }
        other => Err(HarnessError::config("learner.kind", format!("learner `{}` does not fit this environment", other.kind()))),
    }
}

fn fixed<E: Environment + 'static>(env: &E, policy: E::Policy) -> Result<Box<dyn Learner<E>>, HarnessError> {
    FixedPolicy::new(env, policy)
        .map(|f| Box::new(f) as Box<dyn Learner<E>>)
        .map_err(|e| HarnessError::Capability(format!("fixed policy rejected: {e}")))
}

fn require_index(index: Option<usize>, count: usize) -> Result<usize, HarnessError> {
    match index {
        Some(i) if i < count => Ok(i),
        Some(i) => Err(HarnessError::config("learner.index", format!("index {i} out of range for {count} policies"))),
        None => Err(HarnessError::config("learner.index", "fixed learner needs `index` for this environment")),
    }
}

fn sequence<E: Environment<DynInstance = ()> + 'static>(
    instances: &[usize],
    count: usize,
    horizon: usize,
    wrap: impl Fn(usize) -> E::LossInstance,
) -> Result<Box<dyn Adversary<E>>, HarnessError> {
    if instances.len() < horizon {
        return Err(HarnessError::config(
            "adversary.instances",
            format!("sequence has {} entries, horizon is {horizon}", instances.len()),
        ));
    }
    if let Some(bad) = instances.iter().find(|&&i| i >= count) {
        return Err(HarnessError::config("adversary.instances", format!("instance {bad} out of range for {count}")));
    }
    Ok(Box::new(ObliviousSequence::<E>::new(instances.iter().map(|&i| (wrap(i), ())).collect())))
}

// ---------------------------------------------------------------- tabular

pub struct TabularKit {
    cfg: ExperimentConfig,
}

impl TabularKit {
    pub fn new(cfg: &ExperimentConfig) -> Self {
        TabularKit { cfg: cfg.clone() }
    }
}

impl Kit for TabularKit {
    type Env = TabularGame;

    fn config(&self) -> &ExperimentConfig {
        &self.cfg
    }

    fn build_env(&self, _: usize, seeds: &RunSeeds) -> Result<TabularGame, HarnessError> {
        match &self.cfg.environment {
            EnvironmentConfig::Stateless { losses } => {
                TabularGame::stateless(losses).map_err(|e| HarnessError::config("environment.losses", e))
            }
            EnvironmentConfig::RandomTabular { policies, instances, states, low, high } => {
                if *policies == 0 || *instances == 0 || *states == 0 {
                    return Err(HarnessError::config("environment", "policy, instance and state counts must be positive"));
                }
                if !(low <= high) {
                    return Err(HarnessError::config("environment.low", "low must not exceed high"));
                }
                let mut rng = seeds.rng(Purpose::Instance);
                Ok(TabularGame::random(*policies, *instances, *states, *low, *high, &mut rng))
            }
            _ => unreachable!("tabular kit built for a tabular environment"),
        }
    }

    fn class(&self, env: &TabularGame) -> Result<PolicyClass<TabularGame>, HarnessError> {
        Ok(PolicyClass::Finite(env.policy_list()))
    }

    fn learner(
        &self,
        env: &TabularGame,
        horizon: usize,
        seeds: &RunSeeds,
    ) -> Result<Box<dyn Learner<TabularGame>>, HarnessError> {
        match &self.cfg.learner {
            LearnerConfig::Fixed { index, .. } => fixed(env, require_index(*index, env.policies())?),
            _ => {
                let model = if env.states() == 1 { LossModel::Stationary } else { LossModel::Counterfactual };
                generic_learner(&self.cfg, self.class(env)?, None, model, horizon, seeds)
            }
        }
    }

    fn adversary(
        &self,
        env: &TabularGame,
        horizon: usize,
        _: &RunSeeds,
    ) -> Result<Box<dyn Adversary<TabularGame>>, HarnessError> {
        let n = env.instances();
        match &self.cfg.adversary {
            AdversaryConfig::Iid {} => {
                Ok(Box::new(IidAdversary::<TabularGame>::new("uniform", move |r: &mut dyn RngCore| (r.gen_range(0..n), ()))))
            }
            AdversaryConfig::Sequence { instances } => sequence::<TabularGame>(instances, n, horizon, |i| i),
            other => Err(unsupported("adversary.kind", other.kind(), self.cfg.environment.kind())),
        }
    }

    fn finite_game(&self, env: &TabularGame) -> Option<FiniteGame<TabularGame>> {
        Some(FiniteGame { policies: env.policy_list(), instances: env.instance_list().into_iter().map(|z| (z, ())).collect() })
    }

    fn node_sampler(&self, env: &TabularGame) -> Option<Arc<dyn Fn(&mut ChaCha8Rng) -> (usize, ()) + Send + Sync>> {
        let n = env.instances();
        Some(Arc::new(move |r: &mut ChaCha8Rng| (r.gen_range(0..n), ())))
    }
}

// ---------------------------------------------------------------- mdp

pub struct MdpKit {
    cfg: ExperimentConfig,
}

impl MdpKit {
    pub fn new(cfg: &ExperimentConfig) -> Self {
        MdpKit { cfg: cfg.clone() }
    }
}

impl Kit for MdpKit {
    type Env = MdpEnv;

    fn config(&self) -> &ExperimentConfig {
        &self.cfg
    }

    fn build_env(&self, _: usize, seeds: &RunSeeds) -> Result<MdpEnv, HarnessError> {
        let EnvironmentConfig::Mdp { states, actions, alpha } = &self.cfg.environment else {
            unreachable!("mdp kit built for an mdp environment")
        };
        let mut rng = seeds.rng(Purpose::Instance);
        let system = MdpSystem::random_smoothed(*states, *actions, *alpha, &mut rng)
            .map_err(|e| HarnessError::config("environment", e.to_string()))?;
        Ok(MdpEnv::new(system))
    }

    fn class(&self, env: &MdpEnv) -> Result<PolicyClass<MdpEnv>, HarnessError> {
        let list = deterministic_policies(&env.system).map_err(|e| HarnessError::Capability(e.to_string()))?;
        Ok(PolicyClass::Finite(list))
    }

    fn learner(&self, env: &MdpEnv, horizon: usize, seeds: &RunSeeds) -> Result<Box<dyn Learner<MdpEnv>>, HarnessError> {
        match &self.cfg.learner {
            LearnerConfig::Fixed { index, .. } => {
                let list: Vec<MdpPolicy> =
                    deterministic_policies(&env.system).map_err(|e| HarnessError::Capability(e.to_string()))?;
                let i = require_index(*index, list.len())?;
                fixed(env, list[i].clone())
            }
            LearnerConfig::Expweights { lambda } => {
                let value = match lambda {
                    Scaled::MixingSqrtHorizon => {
                        let s = env.system.states() as f64;
                        let a = env.system.actions() as f64;
                        if a < 2.0 {
                            return Err(HarnessError::config("learner.lambda", "the mixing rule needs at least 2 actions"));
                        }
                        env.system.tau * (horizon as f64 / (s * a.ln())).sqrt()
                    }
                    other => other.resolve("learner.lambda", horizon)?,
                };
                let learner = ExpWeightsMdp::new(&env.system, value)
                    .map_err(|e| HarnessError::config("learner.lambda", e.to_string()))?;
                Ok(Box::new(learner))
            }
            _ => generic_learner(&self.cfg, self.class(env)?, None, LossModel::Stationary, horizon, seeds),
        }
    }

    fn adversary(&self, env: &MdpEnv, _: usize, seeds: &RunSeeds) -> Result<Box<dyn Adversary<MdpEnv>>, HarnessError> {
        match &self.cfg.adversary {
            AdversaryConfig::Iid {} => {
                // Bernoulli losses whose means are drawn once per repetition.
                let n = env.system.states() * env.system.actions();
                let mut rng = seeds.rng(Purpose::Adversary);
                let means: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
                Ok(Box::new(IidAdversary::<MdpEnv>::new("bernoulli", move |r: &mut dyn RngCore| {
                    (means.iter().map(|m| if r.gen::<f64>() < *m { 1.0 } else { 0.0 }).collect(), ())
                })))
            }
            other => Err(unsupported("adversary.kind", other.kind(), "mdp")),
        }
    }

    fn node_sampler(&self, env: &MdpEnv) -> Option<Arc<dyn Fn(&mut ChaCha8Rng) -> (Vec<f64>, ()) + Send + Sync>> {
        let n = env.system.states() * env.system.actions();
        Some(Arc::new(move |r: &mut ChaCha8Rng| ((0..n).map(|_| r.gen::<f64>()).collect(), ())))
    }
}

// ---------------------------------------------------------------- lqr

pub struct LqrKit {
    cfg: ExperimentConfig,
    system: Arc<LqrSystem>,
}

impl LqrKit {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self, HarnessError> {
        let EnvironmentConfig::Lqr { a, b, w, kappa, gamma, cost_trace } = &cfg.environment else {
            unreachable!("lqr kit built for an lqr environment")
        };
        let system = LqrSystem::new(
            matrix("environment.a", a)?,
            matrix("environment.b", b)?,
            matrix("environment.w", w)?,
            *kappa,
            *gamma,
            *cost_trace,
        )
        .map_err(|e| HarnessError::config("environment", e.to_string()))?;
        Ok(LqrKit { cfg: cfg.clone(), system: Arc::new(system) })
    }

    pub fn system(&self) -> &Arc<LqrSystem> {
        &self.system
    }
}

impl Kit for LqrKit {
    type Env = LqrEnv;

    fn config(&self) -> &ExperimentConfig {
        &self.cfg
    }

    fn build_env(&self, _: usize, _: &RunSeeds) -> Result<LqrEnv, HarnessError> {
        Ok(LqrEnv { system: Arc::clone(&self.system) })
    }

    fn class(&self, _: &LqrEnv) -> Result<PolicyClass<LqrEnv>, HarnessError> {
        Ok(PolicyClass::Boxed(Arc::new(GainBox { system: Arc::clone(&self.system), bound: self.cfg.comparator.gain_bound })))
    }

    fn learner(&self, env: &LqrEnv, horizon: usize, seeds: &RunSeeds) -> Result<Box<dyn Learner<LqrEnv>>, HarnessError> {
        match &self.cfg.learner {
            LearnerConfig::Fixed { gain: Some(k), .. } => {
                let gain = self
                    .system
                    .certify(matrix("learner.gain", k)?)
                    .map_err(|e| HarnessError::Capability(format!("fixed gain rejected: {e}")))?;
                fixed::<LqrEnv>(env, gain)
            }
            LearnerConfig::Fixed { .. } => Err(HarnessError::config("learner.gain", "fixed learner needs `gain` for lqr")),
            _ => generic_learner(&self.cfg, self.class(env)?, None, LossModel::Stationary, horizon, seeds),
        }
    }

    fn adversary(&self, _: &LqrEnv, _: usize, _: &RunSeeds) -> Result<Box<dyn Adversary<LqrEnv>>, HarnessError> {
        match &self.cfg.adversary {
            AdversaryConfig::Iid {} => {
                // Diagonal costs with each trace at most the cost budget.
                let d = self.system.state_dim();
                let k = self.system.input_dim();
                let budget = self.system.cost_trace;
                Ok(Box::new(IidAdversary::<LqrEnv>::new("diagonal-psd", move |r: &mut dyn RngCore| {
                    let q: Vec<f64> = (0..d).map(|_| r.gen_range(0.0..=budget / d as f64)).collect();
                    let rr: Vec<f64> = (0..k).map(|_| r.gen_range(0.0..=budget / k as f64)).collect();
                    (CostPair { q: Matrix::diag(&q), r: Matrix::diag(&rr) }, ())
                })))
            }
            other => Err(unsupported("adversary.kind", other.kind(), "lqr")),
        }
    }
}

// ---------------------------------------------------------------- lin-lower

pub struct LinLowerKit {
    cfg: ExperimentConfig,
}

impl LinLowerKit {
    pub fn new(cfg: &ExperimentConfig) -> Self {
        LinLowerKit { cfg: cfg.clone() }
    }
}

fn ball_point(dim: usize, radius: f64, r: &mut dyn RngCore) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| r.gen_range(-1.0..=1.0)).collect();
        if norm2(&v) <= 1.0 {
            return v.into_iter().map(|x| x * radius).collect();
        }
    }
}

fn sphere_point(dim: usize, r: &mut dyn RngCore) -> Vec<f64> {
    loop {
        let v = ball_point(dim, 1.0, r);
        let n = norm2(&v);
        if n > 1e-3 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

impl Kit for LinLowerKit {
    type Env = LinLowerBoundEnv;

    fn config(&self) -> &ExperimentConfig {
        &self.cfg
    }

    fn build_env(&self, horizon: usize, _: &RunSeeds) -> Result<LinLowerBoundEnv, HarnessError> {
        let EnvironmentConfig::LinLower { dim, lipschitz } = &self.cfg.environment else {
            unreachable!("lin-lower kit built for a lin-lower environment")
        };
        let l = lipschitz.resolve("environment.lipschitz", horizon)?;
        LinLowerBoundEnv::new(*dim, l).map_err(|e| HarnessError::config("environment", e))
    }

    fn class(&self, _: &LinLowerBoundEnv) -> Result<PolicyClass<LinLowerBoundEnv>, HarnessError> {
        Ok(PolicyClass::Oracle(Arc::new(LinLowerOracle)))
    }

    fn learner(
        &self,
        env: &LinLowerBoundEnv,
        horizon: usize,
        seeds: &RunSeeds,
    ) -> Result<Box<dyn Learner<LinLowerBoundEnv>>, HarnessError> {
        match &self.cfg.learner {
            LearnerConfig::Fixed { vector: Some(v), .. } => {
                env.check_policy(v).map_err(|e| HarnessError::config("learner.vector", e))?;
                fixed(env, v.clone())
            }
            LearnerConfig::Fixed { .. } => {
                Err(HarnessError::config("learner.vector", "fixed learner needs `vector` for lin-lower"))
            }
            _ => {
                let ball = PolicyClass::Boxed(Arc::new(UnitBall { dim: env.dim }));
                generic_learner(&self.cfg, self.class(env)?, Some(ball), LossModel::Stationary, horizon, seeds)
            }
        }
    }

    fn adversary(
        &self,
        env: &LinLowerBoundEnv,
        horizon: usize,
        _: &RunSeeds,
    ) -> Result<Box<dyn Adversary<LinLowerBoundEnv>>, HarnessError> {
        match &self.cfg.adversary {
            AdversaryConfig::Switching { block } => {
                let block = match block {
                    Some(b) => block_length("adversary.block", b, horizon)?,
                    None => (env.lipschitz.floor() as usize).max(1),
                };
                let adv = SwitchingAdversary::new(env.lipschitz, block)
                    .map_err(|e| HarnessError::config("adversary", e.to_string()))?;
                Ok(Box::new(adv))
            }
            AdversaryConfig::Iid {} => {
                let dim = env.dim;
                Ok(Box::new(IidAdversary::<LinLowerBoundEnv>::new("sphere", move |r: &mut dyn RngCore| {
                    (sphere_point(dim, r), ())
                })))
            }
            other => Err(unsupported("adversary.kind", other.kind(), "lin-lower")),
        }
    }

    fn unit_ball(&self) -> bool {
        true
    }
}

// ---------------------------------------------------------------- tracking

pub struct TrackingKit {
    cfg: ExperimentConfig,
    system: TrackingSystem,
    gain: Matrix,
}

impl TrackingKit {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self, HarnessError> {
        let EnvironmentConfig::Tracking { a, b, q, c_z, c_k, c_eta, rho } = &cfg.environment else {
            unreachable!("tracking kit built for a tracking environment")
        };
        let system = TrackingSystem::new(
            matrix("environment.a", a)?,
            matrix("environment.b", b)?,
            matrix("environment.q", q)?,
            *c_z,
            *c_k,
            *c_eta,
            *rho,
        )
        .map_err(|e| HarnessError::config("environment", e.to_string()))?;
        let gain = match &cfg.learner {
            LearnerConfig::TrackingErm { gain } => matrix("learner.gain", gain)?,
            LearnerConfig::Fixed { gain: Some(gain), .. } => matrix("learner.gain", gain)?,
            LearnerConfig::Fixed { .. } => {
                return Err(HarnessError::config("learner.gain", "fixed learner needs `gain` for tracking"))
            }
            other => {
                return Err(HarnessError::config(
                    "learner.kind",
                    format!("learner `{}` does not fit tracking; use tracking-erm or fixed", other.kind()),
                ))
            }
        };
        system.check_gain(&gain).map_err(|e| HarnessError::Capability(format!("gain rejected: {e}")))?;
        Ok(TrackingKit { cfg: cfg.clone(), system, gain })
    }
}

impl Kit for TrackingKit {
    type Env = TrackingEnv;

    fn config(&self) -> &ExperimentConfig {
        &self.cfg
    }

    fn build_env(&self, _: usize, _: &RunSeeds) -> Result<TrackingEnv, HarnessError> {
        Ok(TrackingEnv::new(self.system.clone()))
    }

    /// Biases in `[−c_η, c_η]^k` with the learner's gain.
    fn class(&self, _: &TrackingEnv) -> Result<PolicyClass<TrackingEnv>, HarnessError> {
        Ok(PolicyClass::Boxed(Arc::new(BiasBox { k: self.gain.clone(), bound: self.system.c_eta })))
    }

    fn learner(&self, env: &TrackingEnv, _: usize, _: &RunSeeds) -> Result<Box<dyn Learner<TrackingEnv>>, HarnessError> {
        match &self.cfg.learner {
            LearnerConfig::TrackingErm { .. } => Ok(Box::new(TrackingErm::new(self.gain.clone(), &self.system)?)),
            LearnerConfig::Fixed { bias, .. } => {
                let eta = bias.clone().unwrap_or_else(|| vec![0.0; self.system.input_dim()]);
                if eta.len() != self.system.input_dim() {
                    return Err(HarnessError::config("learner.bias", "bias length must match the input dimension"));
                }
                fixed(env, TrackingPolicy { k: self.gain.clone(), eta })
            }
            other => Err(HarnessError::config("learner.kind", format!("learner `{}` does not fit tracking", other.kind()))),
        }
    }

    fn adversary(&self, _: &TrackingEnv, _: usize, _: &RunSeeds) -> Result<Box<dyn Adversary<TrackingEnv>>, HarnessError> {
        match &self.cfg.adversary {
            AdversaryConfig::Iid {} => {
                let d = self.system.state_dim();
                let radius = self.system.c_z;
                Ok(Box::new(IidAdversary::<TrackingEnv>::new("ball", move |r: &mut dyn RngCore| {
                    (ball_point(d, radius, r), ())
                })))
            }
            other => Err(unsupported("adversary.kind", other.kind(), "tracking")),
        }
    }
}

// ---------------------------------------------------------------- jobs

pub fn run_id(horizon: usize, rep: usize) -> String {
    format!("T{horizon}-r{rep}")
}

fn stability_mode(kind: StabilityKind) -> StabilityMode {
    match kind {
        StabilityKind::Dynamic => StabilityMode::Dynamic,
        StabilityKind::Ergodic => StabilityMode::Ergodic,
    }
}

/// Plays one game and evaluates it.
pub fn execute<K: Kit>(kit: &K, horizon: usize, rep: usize) -> Result<JobArtifacts<K::Env>, HarnessError> {
    let cfg = kit.config();
    let seeds = RunSeeds { master: cfg.seed, rep: rep as u64 };
    let env = kit.build_env(horizon, &seeds)?;
    let class = kit.class(&env)?;
    let mut learner = kit.learner(&env, horizon, &seeds)?;
    let mut adversary = kit.adversary(&env, horizon, &seeds)?;
    let rollout = seeds.rollout(cfg.monte_carlo.rollout_samples);
    let record = run_game_indexed(&env, learner.as_mut(), adversary.as_mut(), horizon, cfg.seed, rep as u64)?;
    let report = policy_regret(&env, &record, &class, &search(cfg), &rollout)?;
    let profile = stability_from_record(&env, &record, stability_mode(cfg.stability), &rollout)?;
    Ok(JobArtifacts { env, record, report, profile })
}

/// Per-round rows and totals of an evaluated game.
pub fn outcome<E: Environment>(artifacts: &JobArtifacts<E>, horizon: usize, rep: usize) -> RunOutcome {
    let JobArtifacts { env, record, report, profile } = artifacts;
    let mut rows = Vec::with_capacity(horizon);
    let mut cum = 0.0;
    let mut comp = 0.0;
    for (i, entry) in record.entries.iter().enumerate() {
        cum += report.learner_losses[i];
        comp += report.comparator_losses[i];
        rows.push(Row {
            t: entry.t,
            policy_id: env.policy_label(&entry.policy),
            loss: report.learner_losses[i],
            cum_loss: cum,
            comparator_cum: comp,
            regret: cum - comp,
            beta: profile.gaps[i],
        });
    }
    RunOutcome {
        run_id: run_id(horizon, rep),
        horizon,
        rep,
        learner_id: record.learner_id.clone(),
        adversary_id: record.adversary_id.clone(),
        comparator_policy: env.policy_label(&report.comparator_policy),
        comparator_method: report.metadata.method.clone(),
        rows,
        learner_cumulative: cum,
        comparator_cumulative: comp,
        regret: cum - comp,
        stability_sum: profile.total(),
        bound: None,
        rademacher: None,
    }
}

/// Sequential Rademacher complexity of the comparator class at `depth`.
pub fn rademacher<K: Kit>(
    kit: &K,
    env: &K::Env,
    source: RademacherSource,
    given: Option<f64>,
    depth: usize,
    seeds: &RunSeeds,
) -> Result<RademacherEstimate, HarnessError> {
    let cfg = kit.config();
    let rollout = seeds.rollout(cfg.monte_carlo.rollout_samples);
    let base = RademacherEstimate { value: 0.0, method: String::new(), depth, interval: None, work: None };
    match source {
        RademacherSource::Given => {
            let value = given.ok_or_else(|| HarnessError::config("bound.rademacher_value", "missing"))?;
            Ok(RademacherEstimate { value, method: "given".into(), ..base })
        }
        RademacherSource::UnitBall => {
            if !kit.unit_ball() {
                return Err(HarnessError::config("bound.rademacher", "unit-ball applies only to lin-lower"));
            }
            Ok(RademacherEstimate { value: unit_ball_rademacher(depth), method: "unit-ball".into(), ..base })
        }
        RademacherSource::Exhaustive => {
            let game = kit
                .finite_game(env)
                .ok_or_else(|| HarnessError::config("bound.rademacher", "exhaustive needs a finite game"))?;
            let v = seq_rademacher_exhaustive(env, &game.policies, &game.instances, depth, &rollout)?;
            Ok(RademacherEstimate { value: v.value, method: "exhaustive".into(), work: Some(v.work), ..base })
        }
        RademacherSource::MonteCarlo => {
            let sampler = kit
                .node_sampler(env)
                .ok_or_else(|| HarnessError::config("bound.rademacher", "monte-carlo needs a finite class"))?;
            let class = kit.class(env)?;
            let PolicyClass::Finite(policies) = class else {
                return Err(HarnessError::config("bound.rademacher", "monte-carlo needs a finite class"));
            };
            if depth > 63 {
                return Err(HarnessError::config("bound.rademacher", "monte-carlo trees are limited to depth 63"));
            }
            let mc = McConfig {
                trees: cfg.monte_carlo.rademacher_trees,
                signs: cfg.monte_carlo.rademacher_signs,
                seed: seeds.derived(Purpose::Tree),
                ..McConfig::default()
            };
            let sup = finite_class_sup(env, &policies, rollout);
            let (est, _) = seq_rademacher_mc(
                sup,
                |_, rng: &mut ChaCha8Rng| {
                    let s = Arc::clone(&sampler);
                    RademacherTree::lazy(depth, rng.gen(), move |r: &mut ChaCha8Rng| s(r))
                },
                None,
                depth,
                &mc,
            )?;
            Ok(RademacherEstimate {
                value: est.value,
                method: "monte-carlo".into(),
                interval: Some((est.ci_low, est.ci_high)),
                ..base
            })
        }
    }
}

/// Itemized bound for one evaluated job.
pub fn bound_for<K: Kit>(
    kit: &K,
    artifacts: &JobArtifacts<K::Env>,
    bound: &BoundConfig,
    horizon: usize,
    rep: usize,
) -> Result<(BoundReport, RademacherEstimate), HarnessError> {
    let cfg = kit.config();
    let seeds = RunSeeds { master: cfg.seed, rep: rep as u64 };
    let rollout = seeds.rollout(cfg.monte_carlo.rollout_samples);
    let env = &artifacts.env;
    match bound.kind {
        BoundKindConfig::Main => {
            let stability = dynamic_total(env, artifacts, &rollout, cfg.stability)?;
            let rad = rademacher(kit, env, bound.rademacher, bound.rademacher_value, horizon, &seeds)?;
            Ok((bound_main(stability, rad.value, bound.lambda, bound.sup_omega)?, rad))
        }
        BoundKindConfig::Ergodic => {
            let stability = if cfg.stability == StabilityKind::Ergodic {
                artifacts.profile.total()
            } else {
                stability_from_record(env, &artifacts.record, StabilityMode::Ergodic, &rollout)?.total()
            };
            let rad = rademacher(kit, env, bound.rademacher, bound.rademacher_value, horizon, &seeds)?;
            let zs = artifacts.record.loss_instances();
            let zetas = artifacts.record.dyn_instances();
            let candidates: Vec<<K::Env as Environment>::Policy> = match kit.class(env)? {
                PolicyClass::Finite(list) => list,
                PolicyClass::Boxed(family) => grid_candidates(family.as_ref(), &search(cfg))
                    .map_err(|e| HarnessError::Runtime(e.to_string()))?
                    .policies()
                    .cloned()
                    .collect(),
                PolicyClass::Oracle(_) => {
                    return Err(HarnessError::Capability("the mixing gap needs a finite or gridded class".into()))
                }
            };
            let mut gap: f64 = 0.0;
            for p in &candidates {
                let profile = mixing_gap_profile(env, p, &zs, &zetas, &rollout)?;
                gap = gap.max(profile.iter().fold(0.0, |a, b| a + b));
            }
            Ok((bound_ergodic(stability, rad.value, bound.lambda, bound.sup_omega, gap)?, rad))
        }
        BoundKindConfig::Minibatch => {
            let LearnerConfig::Minibatch { block } = &cfg.learner else {
                return Err(HarnessError::config("bound.kind", "the mini-batch bound needs a minibatch learner"));
            };
            let own = block_length("learner.block", block, horizon)?;
            let taus: Vec<usize> = if bound.taus.is_empty() {
                vec![own]
            } else {
                bound.taus.iter().map(|t| block_length("bound.taus", t, horizon)).collect::<Result<_, _>>()?
            };
            let mut stability = Vec::with_capacity(taus.len());
            let mut rads = Vec::with_capacity(taus.len());
            let mut first_rad = None;
            for &tau in &taus {
                let beta = if tau == own {
                    dynamic_total(env, artifacts, &rollout, cfg.stability)?
                } else {
                    let mut sub = cfg.clone();
                    sub.learner = LearnerConfig::Minibatch { block: Scaled::Value(tau as f64) };
                    sub.stability = StabilityKind::Dynamic;
                    let sub_kit = Rebound { inner: kit, cfg: sub };
                    execute(&sub_kit, horizon, rep)?.profile.total()
                };
                let rad = rademacher(kit, env, bound.rademacher, bound.rademacher_value, horizon.div_ceil(tau), &seeds)?;
                stability.push(beta);
                rads.push(rad.value);
                first_rad.get_or_insert(rad);
            }
            let report = bound_minibatch(&stability, &rads, &taus)?;
            let chosen = taus.iter().position(|&t| Some(t) == report.tau).unwrap_or(0);
            let rad = RademacherEstimate {
                value: rads[chosen],
                depth: horizon.div_ceil(taus[chosen]),
                ..first_rad.expect("tau grid is nonempty")
            };
            Ok((report, rad))
        }
    }
}

fn dynamic_total<E: Environment>(
    env: &E,
    artifacts: &JobArtifacts<E>,
    rollout: &RolloutConfig,
    kind: StabilityKind,
) -> Result<f64, HarnessError> {
    Ok(match kind {
        StabilityKind::Dynamic => artifacts.profile.total(),
        StabilityKind::Ergodic => stability_from_record(env, &artifacts.record, StabilityMode::Dynamic, rollout)?.total(),
    })
}

/// A kit with a substituted config, used for auxiliary runs.
struct Rebound<'a, K: Kit> {
    inner: &'a K,
    cfg: ExperimentConfig,
}

impl<K: Kit> Kit for Rebound<'_, K> {
    type Env = K::Env;

    fn config(&self) -> &ExperimentConfig {
        &self.cfg
    }

    fn build_env(&self, horizon: usize, seeds: &RunSeeds) -> Result<K::Env, HarnessError> {
        self.inner.build_env(horizon, seeds)
    }

    fn class(&self, env: &K::Env) -> Result<PolicyClass<K::Env>, HarnessError> {
        self.inner.class(env)
    }

    fn learner(&self, env: &K::Env, horizon: usize, seeds: &RunSeeds) -> Result<Box<dyn Learner<K::Env>>, HarnessError> {
        let class = self.inner.class(env)?;
        let LearnerConfig::Minibatch { block } = &self.cfg.learner else {
            return self.inner.learner(env, horizon, seeds);
        };
        let tau = block_length("bound.taus", block, horizon)?;
        Ok(Box::new(MinibatchErm::new(tau, class, search(&self.cfg), seeds.rollout(self.cfg.monte_carlo.rollout_samples))?))
    }

    fn adversary(&self, env: &K::Env, horizon: usize, seeds: &RunSeeds) -> Result<Box<dyn Adversary<K::Env>>, HarnessError> {
        self.inner.adversary(env, horizon, seeds)
    }
}

/// Calls back with the kit matching the configured environment.
pub trait KitVisitor {
    type Output;
    fn visit<K: Kit>(self, kit: &K) -> Result<Self::Output, HarnessError>;
}

pub fn with_kit<V: KitVisitor>(cfg: &ExperimentConfig, visitor: V) -> Result<V::Output, HarnessError> {
    match &cfg.environment {
        EnvironmentConfig::Stateless { .. } | EnvironmentConfig::RandomTabular { .. } => visitor.visit(&TabularKit::new(cfg)),
        EnvironmentConfig::Mdp { .. } => visitor.visit(&MdpKit::new(cfg)),
        EnvironmentConfig::Lqr { .. } => visitor.visit(&LqrKit::new(cfg)?),
        EnvironmentConfig::LinLower { .. } => visitor.visit(&LinLowerKit::new(cfg)),
        EnvironmentConfig::Tracking { .. } => visitor.visit(&TrackingKit::new(cfg)?),
    }
}

/// Maps `f` over `items` on scoped threads; results keep the input order.
pub fn parallel_map<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Mutex;
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(items.len()).max(1);
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<R>>> = Mutex::new((0..items.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let r = f(&items[i]);
                slots.lock().expect("no worker panics while holding the lock")[i] = Some(r);
            });
        }
    });
    slots.into_inner().expect("workers joined").into_iter().map(|r| r.expect("every slot filled")).collect()
}

/// All `(horizon, rep)` pairs in output order.
pub fn jobs(cfg: &ExperimentConfig) -> Vec<(usize, usize)> {
    cfg.horizons.iter().flat_map(|&h| (0..cfg.reps).map(move |r| (h, r))).collect()
}

/// Runs every job of the config, attaching bounds when configured.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<RunOutcome>, HarnessError> {
    struct Run;
    impl KitVisitor for Run {
        type Output = Vec<RunOutcome>;
        fn visit<K: Kit>(self, kit: &K) -> Result<Vec<RunOutcome>, HarnessError> {
            let cfg = kit.config();
            let results = parallel_map(&jobs(cfg), |&(h, r)| -> Result<RunOutcome, HarnessError> {
                let artifacts = execute(kit, h, r)?;
                let mut out = outcome(&artifacts, h, r);
                if let Some(b) = &cfg.bound {
                    let (report, rad) = bound_for(kit, &artifacts, b, h, r)?;
                    out.bound = Some(report);
                    out.rademacher = Some(rad);
                }
                Ok(out)
            });
            results.into_iter().collect()
        }
    }
    with_kit(cfg, Run)
}
