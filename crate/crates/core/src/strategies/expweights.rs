use rand::RngCore;

use crate::discrete::{
    deterministic_policies, mdp_induced_transition, mdp_stationary_distribution, MdpEnv, MdpError, MdpPolicy,
    MdpSystem,
};
use crate::game::{DeclaredAction, Learner, StrategyError};

/// Exponential weights over the deterministic policies of an MDP, scored by
/// their stationary losses; plays the induced randomized policy.
///
/// Weights are `q_π ∝ exp(−Σ_s ℓ*_s(π)/λ)`.
pub struct ExpWeightsMdp {
    lambda: f64,
    actions: usize,
    policies: Vec<MdpPolicy>,
    /// Stationary distribution of each deterministic policy.
    stationary: Vec<Vec<f64>>,
    cumulative: Vec<f64>,
}

impl ExpWeightsMdp {
    /// `lambda = ∞` keeps the uniform mixture.
    pub fn new(system: &MdpSystem, lambda: f64) -> Result<Self, MdpError> {
        if !(lambda > 0.0) {
            return Err(MdpError::Invalid(format!("temperature must be positive, got {lambda}")));
        }
        let policies = deterministic_policies(system)?;
        let stationary = policies
            .iter()
            .map(|p| mdp_stationary_distribution(&mdp_induced_transition(p, system)?))
            .collect::<Result<Vec<_>, _>>()?;
        let n = policies.len();
        Ok(ExpWeightsMdp { lambda, actions: system.actions(), policies, stationary, cumulative: vec![0.0; n] })
    }

    pub fn policies(&self) -> &[MdpPolicy] {
        &self.policies
    }

    pub fn cumulative_losses(&self) -> &[f64] {
        &self.cumulative
    }

    /// Current weights; nonnegative and summing to 1.
    pub fn weights(&self) -> Vec<f64> {
        softmax_weights(&self.cumulative, self.lambda)
    }

    /// `π(x, u) = Σ_i q_i π_i(x, u)`.
    pub fn mixture(&self) -> MdpPolicy {
        let q = self.weights();
        let mut probs = vec![0.0; self.policies[0].probs.len()];
        for (w, p) in q.iter().zip(&self.policies) {
            for (a, b) in probs.iter_mut().zip(&p.probs) {
                *a += w * b;
            }
        }
        // rows are renormalized so rounding never breaks the distribution check
        for row in probs.chunks_mut(self.actions) {
            let s: f64 = row.iter().sum();
            row.iter_mut().for_each(|v| *v /= s);
        }
        MdpPolicy { probs }
    }
}

/// `q_i ∝ exp(−(c_i − min c)/λ)`.
pub fn softmax_weights(cumulative: &[f64], lambda: f64) -> Vec<f64> {
    let min = cumulative.iter().fold(f64::INFINITY, |m, v| m.min(*v));
    let raw: Vec<f64> = cumulative.iter().map(|c| (-(c - min) / lambda).exp()).collect();
    let s: f64 = raw.iter().sum();
    raw.iter().map(|v| v / s).collect()
}

impl Learner<MdpEnv> for ExpWeightsMdp {
    fn id(&self) -> String {
        format!("expweights-mdp(lambda={})", self.lambda)
    }

    fn act(&mut self, _: &MdpEnv, _: usize, _: &mut dyn RngCore) -> Result<MdpPolicy, StrategyError> {
        Ok(self.mixture())
    }

    fn declared_action(&mut self, _: &MdpEnv, _: usize) -> Result<DeclaredAction<MdpPolicy>, StrategyError> {
        Ok(DeclaredAction::Deterministic(self.mixture()))
    }

    fn observe(&mut self, env: &MdpEnv, _: usize, z: &Vec<f64>, _: &()) -> Result<(), StrategyError> {
        for ((p, d), c) in self.policies.iter().zip(&self.stationary).zip(self.cumulative.iter_mut()) {
            let per_state = env.system.policy_loss_vector(p, z);
            *c += d.iter().zip(&per_state).map(|(a, b)| a * b).sum::<f64>();
        }
        Ok(())
    }
}
