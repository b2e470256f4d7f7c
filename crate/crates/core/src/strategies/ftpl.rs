use std::sync::Arc;

use rand::RngCore;
use rand_distr::{Distribution, Exp};

use crate::game::{DeclaredAction, Environment, Learner, StrategyError};
use crate::linalg::dot;
use crate::rng::{stream, Purpose};
use crate::rollout::{CumulativeTracker, History, LossModel, RolloutConfig};
use crate::search::{
    finite_candidates, grid_candidates, minimize_on_candidates, CandidateSet, ParamFamily, PolicyClass, SearchConfig,
    SearchError,
};

/// Follow the perturbed leader: each round plays
/// `argmin_π Σ_{s<t} ℓ_s(π) − ⟨σ, θ(π)⟩` with fresh `σ_j ~ Exp(λ)` i.i.d.
///
/// `θ` is the family parameter vector, or the one-hot index for finite
/// classes. The argmin runs over the candidate grid plus stencil refinement;
/// uncertified parameters never decode and are skipped.
pub struct Ftpl<E: Environment> {
    rate: f64,
    class_label: String,
    set: CandidateSet<E::Policy>,
    family: Option<Arc<dyn ParamFamily<E::Policy>>>,
    search: SearchConfig,
    rollout: RolloutConfig,
    model: LossModel,
    tracker: Option<CumulativeTracker<E>>,
    history: History<E>,
    declared_draws: usize,
    declared_seed: u64,
    current: Option<(E::Policy, Vec<f64>)>,
}

impl<E: Environment> Ftpl<E> {
    /// `rate` is `λ`; larger rates mean smaller perturbations.
    pub fn new(
        rate: f64,
        class: &PolicyClass<E>,
        search: SearchConfig,
        rollout: RolloutConfig,
        model: LossModel,
    ) -> Result<Self, StrategyError> {
        if !(rate > 0.0) {
            return Err(StrategyError::Invalid(format!("perturbation rate must be positive, got {rate}")));
        }
        let (set, family) = match class {
            PolicyClass::Finite(list) => (finite_candidates(list)?, None),
            PolicyClass::Boxed(f) => (grid_candidates(f.as_ref(), &search)?, Some(Arc::clone(f))),
            PolicyClass::Oracle(_) => {
                return Err(StrategyError::Invalid("perturbed leader needs a finite or boxed class".into()))
            }
        };
        Ok(Ftpl {
            rate,
            class_label: class.describe(),
            set,
            family,
            search,
            rollout,
            model,
            tracker: None,
            history: History::default(),
            declared_draws: 64,
            declared_seed: 0,
            current: None,
        })
    }

    /// Perturbation draws and seed used to describe the mixture when an
    /// adversary asks for it.
    pub fn with_declared_sampling(mut self, draws: usize, seed: u64) -> Self {
        self.declared_draws = draws.max(1);
        self.declared_seed = seed;
        self
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn candidates(&self) -> &CandidateSet<E::Policy> {
        &self.set
    }

    /// Parameters of the policy played most recently.
    pub fn current_params(&self) -> Option<&[f64]> {
        self.current.as_ref().map(|c| c.1.as_slice())
    }

    fn ensure_tracker(&mut self, env: &E) -> Result<(), StrategyError> {
        if self.tracker.is_none() {
            let tracker = CumulativeTracker::new(env, self.rollout, self.model, self.set.policies())
                .map_err(|e| StrategyError::Invalid(e.to_string()))?;
            self.tracker = Some(tracker);
        }
        Ok(())
    }

    fn draw(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        let exp = Exp::new(self.rate).expect("rate checked positive");
        let dim = self.set.candidates.first().map_or(0, |c| c.params.len());
        (0..dim).map(|_| exp.sample(rng)).collect()
    }

    /// Minimizer of the perturbed cumulative objective for a given `σ`.
    pub fn perturbed_leader(&self, env: &E, sigma: &[f64]) -> Result<(E::Policy, Vec<f64>), StrategyError> {
        let totals = self.tracker.as_ref().map(|t| t.totals().to_vec()).unwrap_or_else(|| vec![0.0; self.set.len()]);
        let values: Vec<f64> =
            self.set.candidates.iter().zip(&totals).map(|(c, total)| total - dot(sigma, &c.params)).collect();
        let family = self.family.as_deref();
        let history = &self.history;
        let (model, cfg) = (self.model, self.rollout);
        let out = minimize_on_candidates(
            &self.set,
            family,
            &self.search,
            &values,
            |p| {
                let theta = family.expect("refinement only with a family").encode(p);
                let total = history.cumulative(env, p, model, &cfg).map_err(|e| SearchError::Objective(e.to_string()))?;
                Ok(total - dot(sigma, &theta))
            },
            None,
        )?;
        Ok((out.policy, out.params))
    }
}

impl<E: Environment> Learner<E> for Ftpl<E> {
    fn id(&self) -> String {
        format!("ftpl(rate={},{})", self.rate, self.class_label)
    }

    fn act(&mut self, env: &E, _: usize, rng: &mut dyn RngCore) -> Result<E::Policy, StrategyError> {
        self.ensure_tracker(env)?;
        let sigma = self.draw(rng);
        let (policy, params) = self.perturbed_leader(env, &sigma)?;
        self.current = Some((policy.clone(), params));
        Ok(policy)
    }

    fn declared_action(&mut self, env: &E, t: usize) -> Result<DeclaredAction<E::Policy>, StrategyError> {
        self.ensure_tracker(env)?;
        let mut rng = stream(self.declared_seed, 0, t as u64, Purpose::Declared);
        let mut mean: Vec<f64> = Vec::new();
        for _ in 0..self.declared_draws {
            let sigma = self.draw(&mut rng);
            let (_, params) = self.perturbed_leader(env, &sigma)?;
            if mean.is_empty() {
                mean = vec![0.0; params.len()];
            }
            for (m, p) in mean.iter_mut().zip(&params) {
                *m += p;
            }
        }
        let n = self.declared_draws as f64;
        mean.iter_mut().for_each(|m| *m /= n);
        Ok(DeclaredAction::MixtureMean { mean, draws: self.declared_draws })
    }

    fn observe(&mut self, env: &E, _: usize, z: &E::LossInstance, zeta: &E::DynInstance) -> Result<(), StrategyError> {
        self.ensure_tracker(env)?;
        let tracker = self.tracker.as_mut().expect("initialized");
        tracker.observe(env, self.set.policies(), z, zeta).map_err(|e| StrategyError::Invalid(e.to_string()))?;
        self.history.push(env, z, zeta);
        Ok(())
    }
}
