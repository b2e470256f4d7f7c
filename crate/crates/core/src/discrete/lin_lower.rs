//! Linear losses with a Lipschitz switching penalty.
//!
//! Policies, states and instances live in the unit ball of `ℝ^d`. The loss
//! of `f` at state `x` is `⟨f, z⟩ + min(L‖f − x‖₂, 1)` and the state moves
//! to `f`, starting from `x_1 = 0`. A policy replayed from round 1 pays the
//! penalty only at round 1, so its counterfactual loss for `t > 1` is the
//! linear part alone.

use rand::RngCore;

use crate::game::{CapabilityError, Environment};
use crate::linalg::{dot, norm2, sub_vec};
use crate::search::{ErmOracle, ParamFamily, SearchError};

const BALL_SLACK: f64 = 1e-9;

/// `⟨f, z⟩ + min(L‖f − x‖₂, 1)`.
pub fn lin_lowerbound_loss(f: &[f64], x: &[f64], z: &[f64], lipschitz: f64) -> f64 {
    dot(f, z) + (lipschitz * norm2(&sub_vec(f, x))).min(1.0)
}

#[derive(Debug, Clone)]
pub struct LinLowerBoundEnv {
    pub dim: usize,
    /// Lipschitz constant `L` of the switching penalty.
    pub lipschitz: f64,
}

impl LinLowerBoundEnv {
    pub fn new(dim: usize, lipschitz: f64) -> Result<Self, String> {
        if dim < 3 {
            return Err(format!("dimension must be at least 3, got {dim}"));
        }
        if !(lipschitz > 0.0 && lipschitz.is_finite()) {
            return Err(format!("Lipschitz constant must be positive, got {lipschitz}"));
        }
        Ok(LinLowerBoundEnv { dim, lipschitz })
    }

    fn check_ball(&self, v: &[f64], name: &str) -> Result<(), String> {
        if v.len() != self.dim {
            return Err(format!("{name} has length {}, expected {}", v.len(), self.dim));
        }
        let n = norm2(v);
        if !(n <= 1.0 + BALL_SLACK) {
            return Err(format!("‖{name}‖ = {n} exceeds 1"));
        }
        Ok(())
    }
}

impl Environment for LinLowerBoundEnv {
    type State = Vec<f64>;
    type Policy = Vec<f64>;
    type LossInstance = Vec<f64>;
    type DynInstance = ();
    type Law = Vec<f64>;

    fn name(&self) -> String {
        format!("lin-lower(d={},L={})", self.dim, self.lipschitz)
    }

    fn initial_state(&self, _: &mut dyn RngCore) -> Vec<f64> {
        vec![0.0; self.dim]
    }

    fn step(&self, _: &Vec<f64>, f: &Vec<f64>, _: &(), _: &mut dyn RngCore) -> Vec<f64> {
        f.clone()
    }

    fn loss(&self, f: &Vec<f64>, x: &Vec<f64>, z: &Vec<f64>) -> f64 {
        lin_lowerbound_loss(f, x, z, self.lipschitz)
    }

    fn loss_bound(&self) -> f64 {
        2.0
    }

    fn is_deterministic(&self) -> bool {
        true
    }

    fn check_policy(&self, f: &Vec<f64>) -> Result<(), String> {
        self.check_ball(f, "f")
    }

    fn check_loss_instance(&self, z: &Vec<f64>) -> Result<(), String> {
        self.check_ball(z, "z")
    }

    fn check_dyn_instance(&self, _: &()) -> Result<(), String> {
        Ok(())
    }

    fn policy_label(&self, f: &Vec<f64>) -> String {
        let v: Vec<String> = f.iter().map(|c| format!("{c}")).collect();
        format!("f[{}]", v.join(";"))
    }

    fn has_exact_law(&self) -> bool {
        true
    }

    fn initial_law(&self) -> Vec<f64> {
        vec![0.0; self.dim]
    }

    fn law_loss(&self, f: &Vec<f64>, x: &Vec<f64>, z: &Vec<f64>) -> f64 {
        lin_lowerbound_loss(f, x, z, self.lipschitz)
    }

    fn law_step(&self, _: &Vec<f64>, f: &Vec<f64>, _: &()) -> Vec<f64> {
        f.clone()
    }

    fn stationary_loss(&self, f: &Vec<f64>, z: &Vec<f64>) -> Result<f64, CapabilityError> {
        Ok(dot(f, z))
    }

    fn combine_instances(&self, a: &Vec<f64>, b: &Vec<f64>) -> Option<Vec<f64>> {
        Some(a.iter().zip(b).map(|(x, y)| x + y).collect())
    }
}

/// Exact minimizer of `⟨f, Z⟩ + min(L‖f‖, 1)` over the unit ball, where
/// `Z` sums the instances: `−Z/‖Z‖` with value `1 − ‖Z‖` when `‖Z‖ > 1`,
/// otherwise `0` with value `0`.
pub fn lin_lower_best_response(sum: &[f64]) -> (Vec<f64>, f64) {
    let n = norm2(sum);
    if n > 1.0 {
        (sum.iter().map(|v| -v / n).collect(), 1.0 - n)
    } else {
        (vec![0.0; sum.len()], 0.0)
    }
}

/// Comparator and ERM oracle for [`LinLowerBoundEnv`].
pub struct LinLowerOracle;

impl ErmOracle<LinLowerBoundEnv> for LinLowerOracle {
    fn name(&self) -> String {
        "unit-ball-exact".into()
    }

    fn minimize(
        &self,
        env: &LinLowerBoundEnv,
        zs: &[Vec<f64>],
        _: &[()],
    ) -> Result<(Vec<f64>, f64), SearchError> {
        let mut sum = vec![0.0; env.dim];
        for z in zs {
            for (s, v) in sum.iter_mut().zip(z) {
                *s += v;
            }
        }
        if zs.is_empty() {
            return Ok((sum, 0.0));
        }
        Ok(lin_lower_best_response(&sum))
    }
}

/// The unit ball as a box family: parameters outside the ball are
/// projected radially.
pub struct UnitBall {
    pub dim: usize,
}

impl ParamFamily<Vec<f64>> for UnitBall {
    fn lower(&self) -> Vec<f64> {
        vec![-1.0; self.dim]
    }

    fn upper(&self) -> Vec<f64> {
        vec![1.0; self.dim]
    }

    fn decode(&self, theta: &[f64]) -> Option<Vec<f64>> {
        let n = norm2(theta);
        Some(if n > 1.0 { theta.iter().map(|v| v / n).collect() } else { theta.to_vec() })
    }

    fn encode(&self, f: &Vec<f64>) -> Vec<f64> {
        f.clone()
    }
}
