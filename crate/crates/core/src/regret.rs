//! Policy regret and stability profiles of a logged game.

use thiserror::Error;

use crate::game::{run_game_indexed, Adversary, Environment, GameError, GameRecord, Learner};
use crate::rollout::{
    counterfactual_losses, path_expected_losses, CumulativeTracker, Evaluator, History, LossModel, RolloutConfig,
    RolloutError,
};
use crate::search::{
    finite_candidates, grid_candidates, minimize_on_candidates, PolicyClass, Probe, SearchConfig, SearchError,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error(transparent)]
    Game(#[from] GameError),
    #[error(transparent)]
    Rollout(#[from] RolloutError),
    #[error(transparent)]
    Search(#[from] SearchError),
}

/// How the comparator was found.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparatorMetadata {
    /// `"enumeration"`, `"grid+refinement"` or `"oracle:<name>"`.
    pub method: String,
    pub grid_points: usize,
    pub candidates: usize,
    pub rejected: usize,
    pub refinement_steps: usize,
    pub probed: usize,
    /// Particles per expectation; 0 when expectations are exact.
    pub mc_samples: usize,
    pub probes: Vec<Probe>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegretReport<P> {
    pub learner_cumulative: f64,
    pub comparator_cumulative: f64,
    pub comparator_policy: P,
    pub regret: f64,
    /// `E_w ℓ(π_t, x_t[π_{1:t−1}], z_t)` per round.
    pub learner_losses: Vec<f64>,
    /// `ℓ^Φ_t` of the comparator per round.
    pub comparator_losses: Vec<f64>,
    pub metadata: ComparatorMetadata,
}

fn sum_in_order(values: &[f64]) -> f64 {
    values.iter().fold(0.0, |a, b| a + b)
}

/// The hindsight-best fixed policy and its cumulative counterfactual loss.
pub fn best_fixed_policy<E: Environment>(
    env: &E,
    class: &PolicyClass<E>,
    zs: &[E::LossInstance],
    zetas: &[E::DynInstance],
    search: &SearchConfig,
    cfg: &RolloutConfig,
) -> Result<(E::Policy, f64, ComparatorMetadata), EvalError> {
    let mc_samples = Evaluator::new(env, *cfg)?.samples_used();
    let mut history = History::default();
    for (z, zeta) in zs.iter().zip(zetas) {
        history.push(env, z, zeta);
    }
    match class {
        PolicyClass::Finite(list) => {
            let set = finite_candidates(list)?;
            let totals = tracked_totals(env, &set.candidates.iter().map(|c| c.policy.clone()).collect::<Vec<_>>(), zs, zetas, cfg)?;
            let mut probes = Vec::new();
            let out = minimize_on_candidates(&set, None, search, &totals, |_| unreachable!(), Some(&mut probes))?;
            Ok((
                out.policy,
                out.value,
                ComparatorMetadata {
                    method: "enumeration".into(),
                    grid_points: 0,
                    candidates: set.len(),
                    rejected: 0,
                    refinement_steps: 0,
                    probed: out.probed,
                    mc_samples,
                    probes,
                },
            ))
        }
        PolicyClass::Boxed(family) => {
            let set = grid_candidates(family.as_ref(), search)?;
            let policies: Vec<E::Policy> = set.candidates.iter().map(|c| c.policy.clone()).collect();
            let totals = tracked_totals(env, &policies, zs, zetas, cfg)?;
            let mut probes = Vec::new();
            let out = minimize_on_candidates(
                &set,
                Some(family.as_ref()),
                search,
                &totals,
                |p| {
                    history
                        .cumulative(env, p, LossModel::Counterfactual, cfg)
                        .map_err(|e| SearchError::Objective(e.to_string()))
                },
                Some(&mut probes),
            )?;
            Ok((
                out.policy,
                out.value,
                ComparatorMetadata {
                    method: "grid+refinement".into(),
                    grid_points: set.grid_points,
                    candidates: set.len(),
                    rejected: set.rejected,
                    refinement_steps: out.refinement_steps,
                    probed: out.probed,
                    mc_samples,
                    probes,
                },
            ))
        }
        PolicyClass::Oracle(oracle) => {
            let (policy, _) = oracle.minimize(env, zs, zetas)?;
            let value = history.cumulative(env, &policy, LossModel::Counterfactual, cfg)?;
            Ok((
                policy,
                value,
                ComparatorMetadata {
                    method: format!("oracle:{}", oracle.name()),
                    grid_points: 0,
                    candidates: 1,
                    rejected: 0,
                    refinement_steps: 0,
                    probed: 1,
                    mc_samples,
                    probes: Vec::new(),
                },
            ))
        }
    }
}

fn tracked_totals<E: Environment>(
    env: &E,
    policies: &[E::Policy],
    zs: &[E::LossInstance],
    zetas: &[E::DynInstance],
    cfg: &RolloutConfig,
) -> Result<Vec<f64>, EvalError> {
    let mut tracker = CumulativeTracker::new(env, *cfg, LossModel::Counterfactual, policies.iter())?;
    for (z, zeta) in zs.iter().zip(zetas) {
        tracker.observe(env, policies.iter(), z, zeta)?;
    }
    Ok(tracker.totals().to_vec())
}

/// `Σ_t E_w ℓ(π_t, x_t, z_t) − inf_π Σ_t ℓ^Φ_t(π)` for a logged game.
///
/// Both sums run in round order from `0.0`; the comparator uses the same
/// rollout seed, hence the same noise, for every probed policy.
pub fn policy_regret<E: Environment>(
    env: &E,
    record: &GameRecord<E>,
    class: &PolicyClass<E>,
    search: &SearchConfig,
    cfg: &RolloutConfig,
) -> Result<RegretReport<E::Policy>, EvalError> {
    let policies = record.policies();
    let zs = record.loss_instances();
    let zetas = record.dyn_instances();
    let learner_losses = path_expected_losses(env, &policies, &zetas, &zs, cfg)?;
    let learner_cumulative = sum_in_order(&learner_losses);
    let (comparator_policy, comparator_cumulative, metadata) = best_fixed_policy(env, class, &zs, &zetas, search, cfg)?;
    let comparator_losses = counterfactual_losses(env, &comparator_policy, &zetas, &zs, cfg)?;
    Ok(RegretReport {
        learner_cumulative,
        comparator_cumulative,
        comparator_policy,
        regret: learner_cumulative - comparator_cumulative,
        learner_losses,
        comparator_losses,
        metadata,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StabilityMode {
    /// Against the counterfactual loss `ℓ^Φ_t(π_t)`.
    Dynamic,
    /// Against the stationary loss `ℓ*(π_t, z_t)`.
    Ergodic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityProfile {
    pub mode: StabilityMode,
    /// `β_t ≥ 0`.
    pub gaps: Vec<f64>,
    /// `E_w ℓ(π_t, x_t[π_{1:t−1}], z_t)`.
    pub instantaneous: Vec<f64>,
    /// The loss each gap is measured against.
    pub reference: Vec<f64>,
}

impl StabilityProfile {
    pub fn total(&self) -> f64 {
        sum_in_order(&self.gaps)
    }

    pub fn cumulative(&self) -> Vec<f64> {
        let mut acc = 0.0;
        self.gaps
            .iter()
            .map(|g| {
                acc += g;
                acc
            })
            .collect()
    }
}

/// Stability gaps of the policies logged in `record`.
///
/// Counterfactual beliefs are carried forward while the policy repeats and
/// rebuilt from round 1 when it changes.
pub fn stability_from_record<E: Environment>(
    env: &E,
    record: &GameRecord<E>,
    mode: StabilityMode,
    cfg: &RolloutConfig,
) -> Result<StabilityProfile, EvalError> {
    let policies = record.policies();
    let zs = record.loss_instances();
    let zetas = record.dyn_instances();
    let instantaneous = path_expected_losses(env, &policies, &zetas, &zs, cfg)?;
    let reference = match mode {
        StabilityMode::Dynamic => {
            let eval = Evaluator::new(env, *cfg)?;
            let mut out = Vec::with_capacity(policies.len());
            let mut belief = eval.initial();
            for t in 1..=policies.len() {
                let p = &policies[t - 1];
                if t > 1 {
                    if *p == policies[t - 2] {
                        belief = eval.step(&belief, p, &zetas[t - 2], t - 1);
                    } else {
                        belief = eval.initial();
                        for s in 1..t {
                            belief = eval.step(&belief, p, &zetas[s - 1], s);
                        }
                    }
                }
                out.push(eval.loss(&belief, p, &zs[t - 1]));
            }
            out
        }
        StabilityMode::Ergodic => {
            let mut out = Vec::with_capacity(policies.len());
            for (p, z) in policies.iter().zip(&zs) {
                out.push(env.stationary_loss(p, z).map_err(RolloutError::from)?);
            }
            out
        }
    };
    let gaps = instantaneous.iter().zip(&reference).map(|(a, b)| (a - b).abs()).collect();
    Ok(StabilityProfile { mode, gaps, instantaneous, reference })
}

/// Runs a game and returns its dynamic stability profile with the record.
pub fn dynamic_stability_profile<E, L, A>(
    env: &E,
    learner: &mut L,
    adversary: &mut A,
    horizon: usize,
    cfg: &RolloutConfig,
    seed: u64,
) -> Result<(StabilityProfile, GameRecord<E>), EvalError>
where
    E: Environment,
    L: Learner<E> + ?Sized,
    A: Adversary<E> + ?Sized,
{
    let record = run_game_indexed(env, learner, adversary, horizon, seed, 0)?;
    let profile = stability_from_record(env, &record, StabilityMode::Dynamic, cfg)?;
    Ok((profile, record))
}

/// Runs a game and returns its ergodic stability profile with the record.
pub fn ergodic_stability_profile<E, L, A>(
    env: &E,
    learner: &mut L,
    adversary: &mut A,
    horizon: usize,
    cfg: &RolloutConfig,
    seed: u64,
) -> Result<(StabilityProfile, GameRecord<E>), EvalError>
where
    E: Environment,
    L: Learner<E> + ?Sized,
    A: Adversary<E> + ?Sized,
{
    let record = run_game_indexed(env, learner, adversary, horizon, seed, 0)?;
    let profile = stability_from_record(env, &record, StabilityMode::Ergodic, cfg)?;
    Ok((profile, record))
}
