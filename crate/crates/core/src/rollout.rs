//! Expected losses along policy sequences.
//!
//! The expectation over the noise `w` is taken exactly when the environment
//! propagates the law of its state, and otherwise by `N_w` Monte Carlo
//! particles. Particle `i` draws its noise for round `t` from substream
//! `(i, t, Particle)` under the rollout seed, so every policy evaluated with
//! the same seed sees the same noise realizations.

use std::fmt;

use thiserror::Error;

use crate::game::{CapabilityError, Environment};
use crate::rng::{stream, Purpose};

/// Default number of Monte Carlo particles.
pub const DEFAULT_NOISE_SAMPLES: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExpectationMode {
    /// Exact law when available, particles otherwise.
    Auto,
    /// Particles even when an exact law exists.
    MonteCarlo,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RolloutConfig {
    /// `N_w`; ignored for degenerate noise.
    pub samples: usize,
    pub seed: u64,
    pub mode: ExpectationMode,
}

impl Default for RolloutConfig {
    fn default() -> Self {
        RolloutConfig { samples: DEFAULT_NOISE_SAMPLES, seed: 0, mode: ExpectationMode::Auto }
    }
}

impl RolloutConfig {
    pub fn with_seed(seed: u64) -> Self {
        RolloutConfig { seed, ..Self::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RolloutError {
    #[error("round {t} needs {expected} dynamics instances, got {got}")]
    Length { t: usize, expected: usize, got: usize },
    #[error("at least one Monte Carlo sample is required")]
    NoSamples,
    #[error(transparent)]
    Capability(#[from] CapabilityError),
}

/// Distribution of the state, exact or sampled.
pub enum Belief<E: Environment> {
    Law(E::Law),
    Particles(Vec<E::State>),
}

impl<E: Environment> Clone for Belief<E> {
    fn clone(&self) -> Self {
        match self {
            Belief::Law(l) => Belief::Law(l.clone()),
            Belief::Particles(p) => Belief::Particles(p.clone()),
        }
    }
}

impl<E: Environment> fmt::Debug for Belief<E> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Belief::Law(l) => f.debug_tuple("Law").field(l).finish(),
            Belief::Particles(p) => f.debug_tuple("Particles").field(&p.len()).finish(),
        }
    }
}

/// Propagates beliefs under one [`RolloutConfig`].
pub struct Evaluator<'a, E: Environment> {
    env: &'a E,
    cfg: RolloutConfig,
}

impl<'a, E: Environment> Evaluator<'a, E> {
    pub fn new(env: &'a E, cfg: RolloutConfig) -> Result<Self, RolloutError> {
        if cfg.samples == 0 && !env.is_deterministic() {
            return Err(RolloutError::NoSamples);
        }
        Ok(Evaluator { env, cfg })
    }

    pub fn is_exact(&self) -> bool {
        self.env.is_deterministic() || (self.cfg.mode == ExpectationMode::Auto && self.env.has_exact_law())
    }

    /// Particles actually used; 0 in exact mode.
    pub fn samples_used(&self) -> usize {
        if self.is_exact() {
            0
        } else {
            self.cfg.samples
        }
    }

    pub fn initial(&self) -> Belief<E> {
        if self.is_exact() {
            Belief::Law(self.env.initial_law())
        } else {
            Belief::Particles(
                (0..self.cfg.samples)
                    .map(|i| self.env.initial_state(&mut stream(self.cfg.seed, i as u64, 0, Purpose::InitialState)))
                    .collect(),
            )
        }
    }

    pub fn loss(&self, belief: &Belief<E>, policy: &E::Policy, z: &E::LossInstance) -> f64 {
        match belief {
            Belief::Law(law) => self.env.law_loss(policy, law, z),
            Belief::Particles(ps) => {
                let total = ps.iter().fold(0.0, |acc, x| acc + self.env.loss(policy, x, z));
                total / ps.len() as f64
            }
        }
    }

    /// Advances a belief through round `t`.
    pub fn step(&self, belief: &Belief<E>, policy: &E::Policy, zeta: &E::DynInstance, t: usize) -> Belief<E> {
        match belief {
            Belief::Law(law) => Belief::Law(self.env.law_step(law, policy, zeta)),
            Belief::Particles(ps) => Belief::Particles(
                ps.iter()
                    .enumerate()
                    .map(|(i, x)| {
                        let mut rng = stream(self.cfg.seed, i as u64, t as u64, Purpose::Particle);
                        self.env.step(x, policy, zeta, &mut rng)
                    })
                    .collect(),
            ),
        }
    }
}

/// `E_w ℓ(π_t, x_t[π_{1:t−1}], z_t)` for every round of a policy sequence.
///
/// `zetas` needs at least `policies.len() − 1` entries.
pub fn path_expected_losses<E: Environment>(
    env: &E,
    policies: &[E::Policy],
    zetas: &[E::DynInstance],
    zs: &[E::LossInstance],
    cfg: &RolloutConfig,
) -> Result<Vec<f64>, RolloutError> {
    let n = policies.len();
    if zs.len() != n || zetas.len() + 1 < n {
        return Err(RolloutError::Length { t: n, expected: n.saturating_sub(1), got: zetas.len() });
    }
    let eval = Evaluator::new(env, *cfg)?;
    let mut belief = eval.initial();
    let mut out = Vec::with_capacity(n);
    for t in 1..=n {
        out.push(eval.loss(&belief, &policies[t - 1], &zs[t - 1]));
        if t < n {
            belief = eval.step(&belief, &policies[t - 1], &zetas[t - 1], t);
        }
    }
    Ok(out)
}

/// Counterfactual losses `ℓ^Φ_t(π)` for `t = 1..=zs.len()`.
pub fn counterfactual_losses<E: Environment>(
    env: &E,
    policy: &E::Policy,
    zetas: &[E::DynInstance],
    zs: &[E::LossInstance],
    cfg: &RolloutConfig,
) -> Result<Vec<f64>, RolloutError> {
    let n = zs.len();
    if zetas.len() + 1 < n {
        return Err(RolloutError::Length { t: n, expected: n.saturating_sub(1), got: zetas.len() });
    }
    let eval = Evaluator::new(env, *cfg)?;
    let mut belief = eval.initial();
    let mut out = Vec::with_capacity(n);
    for t in 1..=n {
        out.push(eval.loss(&belief, policy, &zs[t - 1]));
        if t < n {
            belief = eval.step(&belief, policy, &zetas[t - 1], t);
        }
    }
    Ok(out)
}

/// `ℓ^Φ_t(π, ζ_{1:t−1}, z_t)`: the expected round-`t` loss had `π` been
/// played from round 1.
pub fn counterfactual_rollout<E: Environment>(
    env: &E,
    policy: &E::Policy,
    zetas: &[E::DynInstance],
    z: &E::LossInstance,
    t: usize,
    cfg: &RolloutConfig,
) -> Result<f64, RolloutError> {
    if t == 0 || zetas.len() != t - 1 {
        return Err(RolloutError::Length { t, expected: t.saturating_sub(1), got: zetas.len() });
    }
    let eval = Evaluator::new(env, *cfg)?;
    let mut belief = eval.initial();
    for (s, zeta) in zetas.iter().enumerate() {
        belief = eval.step(&belief, policy, zeta, s + 1);
    }
    Ok(eval.loss(&belief, policy, z))
}

/// Which per-round loss a cumulative objective adds up.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossModel {
    /// `ℓ^Φ_t(π)`, replaying `π` from round 1.
    Counterfactual,
    /// `ℓ*(π, z_t)`.
    Stationary,
}

/// Running cumulative objectives of a fixed list of policies.
///
/// Counterfactual totals advance each policy's own belief by one round per
/// observation, so a full horizon costs one pass rather than one replay per
/// round. Totals are summed in round order starting from `0.0`.
pub struct CumulativeTracker<E: Environment> {
    cfg: RolloutConfig,
    model: LossModel,
    beliefs: Vec<Belief<E>>,
    totals: Vec<f64>,
    rounds: usize,
}

impl<E: Environment> CumulativeTracker<E> {
    pub fn new<'p>(
        env: &E,
        cfg: RolloutConfig,
        model: LossModel,
        policies: impl ExactSizeIterator<Item = &'p E::Policy>,
    ) -> Result<Self, RolloutError>
    where
        E::Policy: 'p,
    {
        let n = policies.len();
        let beliefs = match model {
            LossModel::Counterfactual => {
                let eval = Evaluator::new(env, cfg)?;
                let init = eval.initial();
                vec![init; n]
            }
            LossModel::Stationary => Vec::new(),
        };
        Ok(CumulativeTracker { cfg, model, beliefs, totals: vec![0.0; n], rounds: 0 })
    }

    pub fn totals(&self) -> &[f64] {
        &self.totals
    }

    pub fn rounds(&self) -> usize {
        self.rounds
    }

    /// Adds round `rounds + 1` with instance `(z, ζ)`; `policies` must be the
    /// list given at construction.
    pub fn observe<'p>(
        &mut self,
        env: &E,
        policies: impl ExactSizeIterator<Item = &'p E::Policy>,
        z: &E::LossInstance,
        zeta: &E::DynInstance,
    ) -> Result<(), RolloutError>
    where
        E::Policy: 'p,
    {
        debug_assert_eq!(policies.len(), self.totals.len());
        let t = self.rounds + 1;
        match self.model {
            LossModel::Counterfactual => {
                let eval = Evaluator::new(env, self.cfg)?;
                for ((p, belief), total) in policies.zip(self.beliefs.iter_mut()).zip(self.totals.iter_mut()) {
                    *total += eval.loss(belief, p, z);
                    *belief = eval.step(belief, p, zeta, t);
                }
            }
            LossModel::Stationary => {
                for (p, total) in policies.zip(self.totals.iter_mut()) {
                    *total += env.stationary_loss(p, z)?;
                }
            }
        }
        self.rounds = t;
        Ok(())
    }
}

/// Observed history of instances, with a running instance sum when the
/// environment's stationary loss is linear in the instance.
pub struct History<E: Environment> {
    pub zs: Vec<E::LossInstance>,
    pub zetas: Vec<E::DynInstance>,
    combined: Option<E::LossInstance>,
    combinable: bool,
}

impl<E: Environment> Clone for History<E> {
    fn clone(&self) -> Self {
        History { zs: self.zs.clone(), zetas: self.zetas.clone(), combined: self.combined.clone(), combinable: self.combinable }
    }
}

impl<E: Environment> Default for History<E> {
    fn default() -> Self {
        History { zs: Vec::new(), zetas: Vec::new(), combined: None, combinable: true }
    }
}

impl<E: Environment> History<E> {
    pub fn len(&self) -> usize {
        self.zs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.zs.is_empty()
    }

    pub fn push(&mut self, env: &E, z: &E::LossInstance, zeta: &E::DynInstance) {
        if self.combinable {
            self.combined = match &self.combined {
                None => Some(z.clone()),
                Some(acc) => env.combine_instances(acc, z),
            };
            self.combinable = self.combined.is_some();
        }
        self.zs.push(z.clone());
        self.zetas.push(zeta.clone());
    }

    /// `Σ_s z_s` if every instance so far could be combined.
    pub fn combined(&self) -> Option<&E::LossInstance> {
        if self.combinable {
            self.combined.as_ref()
        } else {
            None
        }
    }

    /// Cumulative objective of one policy over the whole history.
    pub fn cumulative(
        &self,
        env: &E,
        policy: &E::Policy,
        model: LossModel,
        cfg: &RolloutConfig,
    ) -> Result<f64, RolloutError> {
        match model {
            LossModel::Counterfactual => {
                let losses = counterfactual_losses(env, policy, &self.zetas, &self.zs, cfg)?;
                Ok(losses.iter().fold(0.0, |a, b| a + b))
            }
            LossModel::Stationary => {
                if self.zs.is_empty() {
                    return Ok(0.0);
                }
                if let Some(sum) = self.combined() {
                    return Ok(env.stationary_loss(policy, sum)?);
                }
                let mut total = 0.0;
                for z in &self.zs {
                    total += env.stationary_loss(policy, z)?;
                }
                Ok(total)
            }
        }
    }
}
