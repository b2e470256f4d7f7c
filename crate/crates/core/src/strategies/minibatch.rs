use rand::RngCore;

use super::eval_error;
use crate::game::{DeclaredAction, Environment, Learner, StrategyError};
use crate::regret::best_fixed_policy;
use crate::rollout::RolloutConfig;
use crate::search::{PolicyClass, SearchConfig};

/// Recomputes the hindsight ERM at the first round of each block of `τ`
/// rounds and holds it inside the block.
///
/// Blocks start at `t = kτ + 1`, so the policy played at `t` minimizes the
/// cumulative counterfactual loss of rounds `1..=τ⌊(t−1)/τ⌋`.
pub struct MinibatchErm<E: Environment> {
    block: usize,
    class: PolicyClass<E>,
    search: SearchConfig,
    rollout: RolloutConfig,
    zs: Vec<E::LossInstance>,
    zetas: Vec<E::DynInstance>,
    current: Option<E::Policy>,
    recomputations: usize,
}

impl<E: Environment> MinibatchErm<E> {
    pub fn new(
        block: usize,
        class: PolicyClass<E>,
        search: SearchConfig,
        rollout: RolloutConfig,
    ) -> Result<Self, StrategyError> {
        if block == 0 {
            return Err(StrategyError::Invalid("block length must be at least 1".into()));
        }
        Ok(MinibatchErm {
            block,
            class,
            search,
            rollout,
            zs: Vec::new(),
            zetas: Vec::new(),
            current: None,
            recomputations: 0,
        })
    }

    pub fn block(&self) -> usize {
        self.block
    }

    /// Number of ERM solves so far.
    pub fn recomputations(&self) -> usize {
        self.recomputations
    }

    /// Whether round `t` starts a block.
    pub fn is_block_start(&self, t: usize) -> bool {
        (t - 1) % self.block == 0
    }
}

impl<E: Environment> Learner<E> for MinibatchErm<E> {
    fn id(&self) -> String {
        format!("minibatch-erm(tau={},{})", self.block, self.class.describe())
    }

    fn act(&mut self, env: &E, t: usize, _: &mut dyn RngCore) -> Result<E::Policy, StrategyError> {
        if self.current.is_none() || self.is_block_start(t) {
            let (policy, _, _) = best_fixed_policy(env, &self.class, &self.zs, &self.zetas, &self.search, &self.rollout)
                .map_err(eval_error)?;
            self.current = Some(policy);
            self.recomputations += 1;
        }
        Ok(self.current.clone().expect("set above"))
    }

    fn declared_action(&mut self, _: &E, _: usize) -> Result<DeclaredAction<E::Policy>, StrategyError> {
        self.current
            .clone()
            .map(DeclaredAction::Deterministic)
            .ok_or_else(|| StrategyError::Invalid("declared action requested before act".into()))
    }

    fn observe(&mut self, _: &E, _: usize, z: &E::LossInstance, zeta: &E::DynInstance) -> Result<(), StrategyError> {
        self.zs.push(z.clone());
        self.zetas.push(zeta.clone());
        Ok(())
    }
}
