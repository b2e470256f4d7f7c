use rand::RngCore;

use crate::game::{DeclaredAction, Environment, Learner, StrategyError};

/// Plays the same policy every round.
#[derive(Debug, Clone)]
pub struct FixedPolicy<P> {
    policy: P,
    label: String,
}

impl<P: Clone> FixedPolicy<P> {
    pub fn new<E: Environment<Policy = P>>(env: &E, policy: P) -> Result<Self, StrategyError> {
        env.check_policy(&policy).map_err(StrategyError::Invalid)?;
        let label = env.policy_label(&policy);
        Ok(FixedPolicy { policy, label })
    }

    pub fn policy(&self) -> &P {
        &self.policy
    }
}

impl<E: Environment> Learner<E> for FixedPolicy<E::Policy> {
    fn id(&self) -> String {
        format!("fixed({})", self.label)
    }

    fn act(&mut self, _: &E, _: usize, _: &mut dyn RngCore) -> Result<E::Policy, StrategyError> {
        Ok(self.policy.clone())
    }

    fn declared_action(&mut self, _: &E, _: usize) -> Result<DeclaredAction<E::Policy>, StrategyError> {
        Ok(DeclaredAction::Deterministic(self.policy.clone()))
    }

    fn observe(&mut self, _: &E, _: usize, _: &E::LossInstance, _: &E::DynInstance) -> Result<(), StrategyError> {
        Ok(())
    }
}
