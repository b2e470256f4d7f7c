//! Finite deterministic games given by tables.
//!
//! Policies, instances and states are indices. A game with one state is a
//! stateless online learning problem with loss matrix `ℓ(π, z)`.

use rand::{Rng, RngCore};

use crate::game::{CapabilityError, Environment};

#[derive(Debug, Clone, PartialEq)]
pub struct TabularGame {
    policies: usize,
    instances: usize,
    states: usize,
    /// `loss[(π·S + x)·Z + z]`.
    loss: Vec<f64>,
    /// `next[x·P + π]`.
    next: Vec<usize>,
    pub start: usize,
}

impl TabularGame {
    pub fn new(
        policies: usize,
        instances: usize,
        states: usize,
        loss: Vec<f64>,
        next: Vec<usize>,
        start: usize,
    ) -> Result<Self, String> {
        if policies == 0 || instances == 0 || states == 0 {
            return Err("policy, instance and state counts must be positive".into());
        }
        if loss.len() != policies * states * instances || loss.iter().any(|v| !v.is_finite()) {
            return Err(format!("loss table needs {} finite entries", policies * states * instances));
        }
        if next.len() != states * policies || next.iter().any(|&x| x >= states) {
            return Err(format!("transition table needs {} entries below {states}", states * policies));
        }
        if start >= states {
            return Err(format!("start state {start} out of range"));
        }
        Ok(TabularGame { policies, instances, states, loss, next, start })
    }

    /// Stateless game from a row-per-policy loss matrix.
    pub fn stateless(matrix: &[Vec<f64>]) -> Result<Self, String> {
        let p = matrix.len();
        let z = matrix.first().map_or(0, |r| r.len());
        if matrix.iter().any(|r| r.len() != z) {
            return Err("loss matrix rows differ in length".into());
        }
        Self::new(p, z, 1, matrix.concat(), vec![0; p], 0)
    }

    /// Uniform losses in `[lo, hi]` and uniform transitions.
    pub fn random(policies: usize, instances: usize, states: usize, lo: f64, hi: f64, rng: &mut dyn RngCore) -> Self {
        let loss = (0..policies * states * instances).map(|_| rng.gen_range(lo..=hi)).collect();
        let next = (0..states * policies).map(|_| rng.gen_range(0..states)).collect();
        Self::new(policies, instances, states, loss, next, 0).expect("generated tables are consistent")
    }

    pub fn policies(&self) -> usize {
        self.policies
    }

    pub fn instances(&self) -> usize {
        self.instances
    }

    pub fn states(&self) -> usize {
        self.states
    }

    pub fn value(&self, policy: usize, state: usize, instance: usize) -> f64 {
        self.loss[(policy * self.states + state) * self.instances + instance]
    }

    pub fn successor(&self, state: usize, policy: usize) -> usize {
        self.next[state * self.policies + policy]
    }

    pub fn policy_list(&self) -> Vec<usize> {
        (0..self.policies).collect()
    }

    pub fn instance_list(&self) -> Vec<usize> {
        (0..self.instances).collect()
    }
}

impl Environment for TabularGame {
    type State = usize;
    type Policy = usize;
    type LossInstance = usize;
    type DynInstance = ();
    type Law = usize;

    fn name(&self) -> String {
        format!("tabular(P={},Z={},S={})", self.policies, self.instances, self.states)
    }

    fn initial_state(&self, _: &mut dyn RngCore) -> usize {
        self.start
    }

    fn step(&self, x: &usize, p: &usize, _: &(), _: &mut dyn RngCore) -> usize {
        self.successor(*x, *p)
    }

    fn loss(&self, p: &usize, x: &usize, z: &usize) -> f64 {
        self.value(*p, *x, *z)
    }

    fn loss_bound(&self) -> f64 {
        self.loss.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    fn is_deterministic(&self) -> bool {
        true
    }

    fn check_policy(&self, p: &usize) -> Result<(), String> {
        if *p < self.policies {
            Ok(())
        } else {
            Err(format!("policy {p} out of range"))
        }
    }

    fn check_loss_instance(&self, z: &usize) -> Result<(), String> {
        if *z < self.instances {
            Ok(())
        } else {
            Err(format!("instance {z} out of range"))
        }
    }

    fn check_dyn_instance(&self, _: &()) -> Result<(), String> {
        Ok(())
    }

    fn policy_label(&self, p: &usize) -> String {
        format!("p{p}")
    }

    fn has_exact_law(&self) -> bool {
        true
    }

    fn initial_law(&self) -> usize {
        self.start
    }

    fn law_loss(&self, p: &usize, x: &usize, z: &usize) -> f64 {
        self.value(*p, *x, *z)
    }

    fn law_step(&self, x: &usize, p: &usize, _: &()) -> usize {
        self.successor(*x, *p)
    }

    fn stationary_loss(&self, p: &usize, z: &usize) -> Result<f64, CapabilityError> {
        if self.states == 1 {
            Ok(self.value(*p, 0, *z))
        } else {
            Err(CapabilityError::NoStationaryLoss(self.name()))
        }
    }
}
