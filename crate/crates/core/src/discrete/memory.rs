//! Stateless losses with a unit switching cost and a sign channel.
//!
//! The state is the previously played policy. The wrapped loss is
//! `ε ℓ̃(f, z) + 1[f ≠ x]`; round 1 has no previous policy and is never
//! charged a switch.

use rand::RngCore;

use crate::game::{CapabilityError, Environment};

/// Instance of the wrapped game: inner instance index and sign `ε`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignedInstance {
    pub index: usize,
    pub sign: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MemoryWrapper {
    /// `inner[π][z]`.
    inner: Vec<Vec<f64>>,
}

impl MemoryWrapper {
    pub fn new(inner: Vec<Vec<f64>>) -> Result<Self, String> {
        let z = inner.first().map_or(0, |r| r.len());
        if inner.is_empty() || z == 0 || inner.iter().any(|r| r.len() != z) {
            return Err("inner loss matrix must be nonempty and rectangular".into());
        }
        if inner.iter().flatten().any(|v| !v.is_finite()) {
            return Err("inner losses must be finite".into());
        }
        Ok(MemoryWrapper { inner })
    }

    pub fn policies(&self) -> usize {
        self.inner.len()
    }

    pub fn instances(&self) -> usize {
        self.inner[0].len()
    }

    pub fn inner_loss(&self, policy: usize, instance: usize) -> f64 {
        self.inner[policy][instance]
    }

    /// `ε ℓ̃(f, z) + 1[f ≠ x]`.
    pub fn wrapped_loss(&self, f: usize, x: Option<usize>, z: &SignedInstance) -> f64 {
        let switch = match x {
            Some(prev) if prev != f => 1.0,
            _ => 0.0,
        };
        z.sign * self.inner[f][z.index] + switch
    }
}

/// Environments whose loss channel can be multiplied by a sign.
pub trait SignChannel: Environment {
    fn with_sign(&self, z: &Self::LossInstance, sign: f64) -> Self::LossInstance;
}

impl SignChannel for MemoryWrapper {
    fn with_sign(&self, z: &SignedInstance, sign: f64) -> SignedInstance {
        SignedInstance { index: z.index, sign: z.sign * sign }
    }
}

impl Environment for MemoryWrapper {
    type State = Option<usize>;
    type Policy = usize;
    type LossInstance = SignedInstance;
    type DynInstance = ();
    type Law = Option<usize>;

    fn name(&self) -> String {
        format!("memory(P={},Z={})", self.policies(), self.instances())
    }

    fn initial_state(&self, _: &mut dyn RngCore) -> Option<usize> {
        None
    }

    fn step(&self, _: &Option<usize>, f: &usize, _: &(), _: &mut dyn RngCore) -> Option<usize> {
        Some(*f)
    }

    fn loss(&self, f: &usize, x: &Option<usize>, z: &SignedInstance) -> f64 {
        self.wrapped_loss(*f, *x, z)
    }

    fn loss_bound(&self) -> f64 {
        self.inner.iter().flatten().fold(0.0, |m: f64, v| m.max(v.abs())) + 1.0
    }

    fn is_deterministic(&self) -> bool {
        true
    }

    fn check_policy(&self, f: &usize) -> Result<(), String> {
        if *f < self.policies() {
            Ok(())
        } else {
            Err(format!("policy {f} out of range"))
        }
    }

    fn check_loss_instance(&self, z: &SignedInstance) -> Result<(), String> {
        if z.index >= self.instances() {
            return Err(format!("instance {} out of range", z.index));
        }
        if z.sign != 1.0 && z.sign != -1.0 {
            return Err(format!("sign must be ±1, got {}", z.sign));
        }
        Ok(())
    }

    fn check_dyn_instance(&self, _: &()) -> Result<(), String> {
        Ok(())
    }

    fn policy_label(&self, f: &usize) -> String {
        format!("p{f}")
    }

    fn has_exact_law(&self) -> bool {
        true
    }

    fn initial_law(&self) -> Option<usize> {
        None
    }

    fn law_loss(&self, f: &usize, x: &Option<usize>, z: &SignedInstance) -> f64 {
        self.wrapped_loss(*f, *x, z)
    }

    fn law_step(&self, _: &Option<usize>, f: &usize, _: &()) -> Option<usize> {
        Some(*f)
    }

    fn stationary_loss(&self, f: &usize, z: &SignedInstance) -> Result<f64, CapabilityError> {
        Ok(z.sign * self.inner[*f][z.index])
    }
}
