//! Linear dynamics driven by bounded adversarial disturbances:
//! `x⁺ = (A + BK)x + ζ` from `x_1 = 0`. No stationary loss exists, so
//! only counterfactual losses are available.

use std::sync::Arc;

use rand::RngCore;

use super::lqr::format_matrix_label;
use super::{check_psd_with_trace, check_vec_norm, ControlError};
use crate::game::Environment;
use crate::linalg::{dot, Matrix};
use crate::control::lqr::{CostPair, LinearGain, LqrSystem};
use crate::search::ParamFamily;

#[derive(Debug, Clone)]
pub struct AdvLqrSystem {
    /// Certification backend: same `(A, B, κ, γ, C)` with `W = I`.
    certifier: LqrSystem,
    /// `‖ζ_t‖₂ ≤ W_adv`.
    pub w_adv: f64,
}

impl AdvLqrSystem {
    pub fn new(a: Matrix, b: Matrix, w_adv: f64, kappa: f64, gamma: f64, cost_trace: f64) -> Result<Self, ControlError> {
        if !(w_adv >= 0.0) {
            return Err(ControlError::InvalidSystem(format!("disturbance bound must be ≥ 0, got {w_adv}")));
        }
        let d = a.rows();
        let certifier = LqrSystem::new(a, b, Matrix::identity(d), kappa, gamma, cost_trace)?;
        Ok(AdvLqrSystem { certifier, w_adv })
    }

    pub fn a(&self) -> &Matrix {
        self.certifier.a()
    }

    pub fn b(&self) -> &Matrix {
        self.certifier.b()
    }

    pub fn kappa(&self) -> f64 {
        self.certifier.kappa
    }

    pub fn gamma(&self) -> f64 {
        self.certifier.gamma
    }

    pub fn cost_trace(&self) -> f64 {
        self.certifier.cost_trace
    }

    pub fn state_dim(&self) -> usize {
        self.certifier.state_dim()
    }

    pub fn input_dim(&self) -> usize {
        self.certifier.input_dim()
    }

    pub fn closed_loop(&self, k: &Matrix) -> Matrix {
        self.certifier.closed_loop(k)
    }

    pub fn certify(&self, k: Matrix) -> Result<LinearGain, ControlError> {
        self.certifier.certify(k)
    }

    /// `C_x = κ W_adv / γ`.
    pub fn state_bound(&self) -> f64 {
        self.kappa() * self.w_adv / self.gamma()
    }

    /// `C(1 + κ²) C_x²`.
    pub fn loss_bound(&self) -> f64 {
        let cx = self.state_bound();
        self.cost_trace() * (1.0 + self.kappa().powi(2)) * cx * cx
    }

    /// `C(2C_x²κ + (κ² + 1)(2κ⁴C_xσ_B W/γ² + κ³C_x²σ_B/γ))` with `σ_B = ‖B‖₂`.
    pub fn lipschitz_constant(&self) -> f64 {
        let (k, g, w) = (self.kappa(), self.gamma(), self.w_adv);
        let cx = self.state_bound();
        let sb = self.certifier.b_norm();
        self.cost_trace()
            * (2.0 * cx * cx * k
                + (k * k + 1.0) * (2.0 * k.powi(4) * cx * sb * w / (g * g) + k.powi(3) * cx * cx * sb / g))
    }

    pub(crate) fn certifier(&self) -> &LqrSystem {
        &self.certifier
    }
}

/// `X̃_t = x̃_t x̃_tᵀ` where `x̃` replays `K` from `x_1 = 0` against
/// `ζ_{1:t−1}`.
pub fn advlqr_counterfactual_covariance(k: &Matrix, zetas: &[Vec<f64>], system: &AdvLqrSystem) -> Matrix {
    let acl = system.closed_loop(k);
    let mut x = vec![0.0; system.state_dim()];
    for zeta in zetas {
        x = acl.mul_vec(&x);
        for (xi, z) in x.iter_mut().zip(zeta) {
            *xi += z;
        }
    }
    Matrix::outer(&x, &x)
}

#[derive(Debug, Clone)]
pub struct AdvLqrEnv {
    pub system: Arc<AdvLqrSystem>,
}

impl AdvLqrEnv {
    pub fn new(system: AdvLqrSystem) -> Self {
        AdvLqrEnv { system: Arc::new(system) }
    }
}

impl Environment for AdvLqrEnv {
    type State = Vec<f64>;
    type Policy = LinearGain;
    type LossInstance = CostPair;
    type DynInstance = Vec<f64>;
    type Law = Vec<f64>;

    fn name(&self) -> String {
        format!("adv-lqr(d={},k={})", self.system.state_dim(), self.system.input_dim())
    }

    fn initial_state(&self, _: &mut dyn RngCore) -> Vec<f64> {
        vec![0.0; self.system.state_dim()]
    }

    fn step(&self, x: &Vec<f64>, p: &LinearGain, zeta: &Vec<f64>, _: &mut dyn RngCore) -> Vec<f64> {
        self.law_step(x, p, zeta)
    }

    fn loss(&self, p: &LinearGain, x: &Vec<f64>, z: &CostPair) -> f64 {
        let u = p.k().mul_vec(x);
        dot(x, &z.q.mul_vec(x)) + dot(&u, &z.r.mul_vec(&u))
    }

    fn loss_bound(&self) -> f64 {
        self.system.loss_bound()
    }

    fn is_deterministic(&self) -> bool {
        true
    }

    fn check_policy(&self, p: &LinearGain) -> Result<(), String> {
        if p.stationary_covariance(self.system.certifier()).is_some() {
            return Ok(());
        }
        self.system.certify(p.k().clone()).map(|_| ()).map_err(|e| e.to_string())
    }

    fn check_loss_instance(&self, z: &CostPair) -> Result<(), String> {
        check_psd_with_trace(&z.q, self.system.state_dim(), self.system.cost_trace(), "Q")?;
        check_psd_with_trace(&z.r, self.system.input_dim(), self.system.cost_trace(), "R")
    }

    fn check_dyn_instance(&self, zeta: &Vec<f64>) -> Result<(), String> {
        check_vec_norm(zeta, self.system.state_dim(), self.system.w_adv, "ζ")
    }

    fn policy_label(&self, p: &LinearGain) -> String {
        format_matrix_label("K", p.k())
    }

    fn has_exact_law(&self) -> bool {
        true
    }

    fn initial_law(&self) -> Vec<f64> {
        vec![0.0; self.system.state_dim()]
    }

    fn law_loss(&self, p: &LinearGain, x: &Vec<f64>, z: &CostPair) -> f64 {
        self.loss(p, x, z)
    }

    fn law_step(&self, x: &Vec<f64>, p: &LinearGain, zeta: &Vec<f64>) -> Vec<f64> {
        let mut next = self.system.closed_loop(p.k()).mul_vec(x);
        for (n, z) in next.iter_mut().zip(zeta) {
            *n += z;
        }
        next
    }
}

/// Certified gains in `[−bound, bound]^{k×d}`.
pub struct AdvGainBox {
    pub system: Arc<AdvLqrSystem>,
    pub bound: f64,
}

impl ParamFamily<LinearGain> for AdvGainBox {
    fn lower(&self) -> Vec<f64> {
        vec![-self.bound; self.system.input_dim() * self.system.state_dim()]
    }

    fn upper(&self) -> Vec<f64> {
        vec![self.bound; self.system.input_dim() * self.system.state_dim()]
    }

    fn decode(&self, theta: &[f64]) -> Option<LinearGain> {
        let k = Matrix::from_vec(self.system.input_dim(), self.system.state_dim(), theta.to_vec());
        self.system.certify(k).ok()
    }

    fn encode(&self, p: &LinearGain) -> Vec<f64> {
        p.k().as_slice().to_vec()
    }
}
