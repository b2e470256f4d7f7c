use rand::RngCore;

use crate::control::{tracking_erm_bias, TrackingEnv, TrackingPolicy, TrackingSystem};
use crate::discrete::{isotron_erm, IsotronEnv, IsotronInstance, IsotronPolicy};
use crate::game::{DeclaredAction, Learner, StrategyError};
use crate::linalg::Matrix;

/// Fixed gain `K` with the closed-form ERM bias of the running target mean.
pub struct TrackingErm {
    k: Matrix,
    sum: Vec<f64>,
    count: usize,
    current: Option<TrackingPolicy>,
}

impl TrackingErm {
    pub fn new(k: Matrix, system: &TrackingSystem) -> Result<Self, StrategyError> {
        system.check_gain(&k).map_err(StrategyError::Invalid)?;
        Ok(TrackingErm { k, sum: vec![0.0; system.state_dim()], count: 0, current: None })
    }

    /// Mean of the targets observed so far, zero before the first.
    pub fn mean_target(&self) -> Vec<f64> {
        if self.count == 0 {
            return self.sum.clone();
        }
        self.sum.iter().map(|s| s / self.count as f64).collect()
    }
}

impl Learner<TrackingEnv> for TrackingErm {
    fn id(&self) -> String {
        "tracking-erm".into()
    }

    fn act(&mut self, env: &TrackingEnv, _: usize, _: &mut dyn RngCore) -> Result<TrackingPolicy, StrategyError> {
        let eta = tracking_erm_bias(&self.k, &self.mean_target(), &env.system)
            .map_err(|e| StrategyError::Invalid(e.to_string()))?;
        let policy = TrackingPolicy { k: self.k.clone(), eta };
        self.current = Some(policy.clone());
        Ok(policy)
    }

    fn declared_action(&mut self, _: &TrackingEnv, _: usize) -> Result<DeclaredAction<TrackingPolicy>, StrategyError> {
        self.current
            .clone()
            .map(DeclaredAction::Deterministic)
            .ok_or_else(|| StrategyError::Invalid("declared action requested before act".into()))
    }

    fn observe(&mut self, _: &TrackingEnv, _: usize, z: &Vec<f64>, _: &()) -> Result<(), StrategyError> {
        for (s, v) in self.sum.iter_mut().zip(z) {
            *s += v;
        }
        self.count += 1;
        Ok(())
    }
}

/// Refits the single-index ERM on all observed rounds.
#[derive(Default)]
pub struct IsotronErm {
    zs: Vec<IsotronInstance>,
    current: Option<IsotronPolicy>,
}

impl IsotronErm {
    pub fn new() -> Self {
        Self::default()
    }
}

impl Learner<IsotronEnv> for IsotronErm {
    fn id(&self) -> String {
        "isotron-erm".into()
    }

    fn act(&mut self, env: &IsotronEnv, _: usize, _: &mut dyn RngCore) -> Result<IsotronPolicy, StrategyError> {
        let policy = isotron_erm(env.dim, &self.zs);
        self.current = Some(policy.clone());
        Ok(policy)
    }

    fn declared_action(&mut self, _: &IsotronEnv, _: usize) -> Result<DeclaredAction<IsotronPolicy>, StrategyError> {
        self.current
            .clone()
            .map(DeclaredAction::Deterministic)
            .ok_or_else(|| StrategyError::Invalid("declared action requested before act".into()))
    }

    fn observe(&mut self, _: &IsotronEnv, _: usize, z: &IsotronInstance, _: &()) -> Result<(), StrategyError> {
        self.zs.push(z.clone());
        Ok(())
    }
}
