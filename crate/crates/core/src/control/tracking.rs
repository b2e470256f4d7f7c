//! Deterministic tracking of adversarial targets.
//!
//! Starting from `x_1 = 0`, the learner plays `u = Kx + η`, pays
//! `(x − z)ᵀQ(x − z) + ‖u‖²` and moves to `Ax + Bu`. A fixed policy settles
//! at `x* = M_K η` with `M_K = (I − A − BK)⁻¹B`.

use rand::RngCore;

use super::lqr::format_matrix_label;
use super::{check_vec_norm, eig_range, ControlError, CERT_SLACK};
use crate::game::{CapabilityError, Environment};
use crate::linalg::{dot, inverse, min_singular_value, norm2, solve_linear, spectral_norm, sub_vec, Matrix};
use crate::search::ParamFamily;

#[derive(Debug, Clone)]
pub struct TrackingSystem {
    a: Matrix,
    b: Matrix,
    q: Matrix,
    /// `‖z‖₂ ≤ c_z`.
    pub c_z: f64,
    /// `‖K‖₂ ≤ c_K`.
    pub c_k: f64,
    /// `‖η‖₂ ≤ c_η` for the nominal class.
    pub c_eta: f64,
    /// `‖A + BK‖₂ ≤ ρ`.
    pub rho: f64,
    /// `λ_min(Q)`.
    pub sigma_q: f64,
    /// `‖Q‖₂`.
    pub q_norm: f64,
    /// `‖B‖₂`.
    pub b_norm: f64,
    /// Smallest singular value of `B`.
    pub sigma_b: f64,
}

impl TrackingSystem {
    pub fn new(a: Matrix, b: Matrix, q: Matrix, c_z: f64, c_k: f64, c_eta: f64, rho: f64) -> Result<Self, ControlError> {
        let d = a.rows();
        if d == 0 || !a.is_square() {
            return Err(ControlError::InvalidSystem(format!("A must be square and nonempty, got {:?}", a.shape())));
        }
        if b.rows() != d || b.cols() == 0 {
            return Err(ControlError::InvalidSystem(format!("B must be {d}xk with k ≥ 1, got {:?}", b.shape())));
        }
        if q.shape() != (d, d) || (&q - &q.transpose()).max_abs() > 1e-12 * (1.0 + q.max_abs()) {
            return Err(ControlError::InvalidSystem("Q must be a symmetric dxd matrix".into()));
        }
        let (sigma_q, q_norm) = eig_range(&q)?;
        if !(sigma_q > 0.0) {
            return Err(ControlError::InvalidSystem(format!("Q must be positive definite, λ_min = {sigma_q:e}")));
        }
        if !(rho > 0.0 && rho < 1.0) {
            return Err(ControlError::InvalidSystem(format!("need 0 < ρ < 1, got {rho}")));
        }
        if !(c_z >= 0.0 && c_k >= 0.0 && c_eta >= 0.0) {
            return Err(ControlError::InvalidSystem("norm bounds must be nonnegative".into()));
        }
        let b_norm = spectral_norm(&b);
        let sigma_b = min_singular_value(&b);
        Ok(TrackingSystem { a, b, q, c_z, c_k, c_eta, rho, sigma_q, q_norm, b_norm, sigma_b })
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }

    pub fn b(&self) -> &Matrix {
        &self.b
    }

    pub fn q(&self) -> &Matrix {
        &self.q
    }

    pub fn state_dim(&self) -> usize {
        self.a.rows()
    }

    pub fn input_dim(&self) -> usize {
        self.b.cols()
    }

    pub fn closed_loop(&self, k: &Matrix) -> Matrix {
        &self.a + &(&self.b * k)
    }

    /// `‖η‖` bound of the reparameterized class that contains every ERM
    /// bias: `max(2c_η(‖B‖c_K/(1−ρ) + 1), c_η c_z‖Q‖‖B‖/(σ_Q σ_B²(1−ρ)))`.
    pub fn extended_bias_bound(&self) -> f64 {
        let first = 2.0 * self.c_eta * (self.b_norm * self.c_k / (1.0 - self.rho) + 1.0);
        first.max(self.stability_constant() / 2.0)
    }

    /// `ψ_η = 2c_z c_η‖Q‖‖B‖/(σ_Q σ_B²(1−ρ))`, so that successive ERM biases
    /// satisfy `‖η_t − η_{t+1}‖ ≤ ψ_η/(t+1)`.
    pub fn stability_constant(&self) -> f64 {
        if self.sigma_b == 0.0 {
            return f64::INFINITY;
        }
        2.0 * self.c_z * self.c_eta * self.q_norm * self.b_norm
            / (self.sigma_q * self.sigma_b * self.sigma_b * (1.0 - self.rho))
    }

    /// `c_x = ‖B‖c_η'/(1−ρ)`, a bound on every reachable state from `x_1 = 0`.
    pub fn state_bound(&self) -> f64 {
        self.b_norm * self.extended_bias_bound() / (1.0 - self.rho)
    }

    pub fn check_gain(&self, k: &Matrix) -> Result<(), String> {
        if k.shape() != (self.input_dim(), self.state_dim()) {
            return Err(format!("K must be {}x{}, got {:?}", self.input_dim(), self.state_dim(), k.shape()));
        }
        let nk = spectral_norm(k);
        if nk > self.c_k + CERT_SLACK {
            return Err(format!("‖K‖₂ = {nk} exceeds c_K = {}", self.c_k));
        }
        let ncl = spectral_norm(&self.closed_loop(k));
        if ncl > self.rho + CERT_SLACK {
            return Err(format!("‖A+BK‖₂ = {ncl} exceeds ρ = {}", self.rho));
        }
        Ok(())
    }
}

/// `u = Kx + η`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackingPolicy {
    pub k: Matrix,
    pub eta: Vec<f64>,
}

impl TrackingPolicy {
    pub fn action(&self, x: &[f64]) -> Vec<f64> {
        let mut u = self.k.mul_vec(x);
        for (ui, e) in u.iter_mut().zip(&self.eta) {
            *ui += e;
        }
        u
    }
}

/// `M_K = (I − A − BK)⁻¹B`.
pub fn tracking_gain_map(k: &Matrix, system: &TrackingSystem) -> Result<Matrix, ControlError> {
    let d = system.state_dim();
    let lhs = &Matrix::identity(d) - &system.closed_loop(k);
    Ok(&inverse(&lhs)? * &system.b)
}

/// `x* = M_K η`, the fixed point of `x ↦ Ax + B(Kx + η)`.
pub fn tracking_stationary_state(k: &Matrix, eta: &[f64], system: &TrackingSystem) -> Result<Vec<f64>, ControlError> {
    let d = system.state_dim();
    let lhs = &Matrix::identity(d) - &system.closed_loop(k);
    let rhs = system.b.mul_vec(eta);
    let x = solve_linear(&lhs, &rhs)?;
    let residual = norm2(&sub_vec(&lhs.mul_vec(&x), &rhs));
    if residual > 1e-10 * (1.0 + norm2(&rhs)) {
        return Err(ControlError::Linalg(crate::linalg::LinalgError::Residual { residual }));
    }
    Ok(x)
}

/// Minimizer over `η` of the stationary loss against the mean target:
/// `η = G⁻¹M_KᵀQ z̄` with `G = M_Kᵀ(Q + KᵀK)M_K + I + KM_K + M_KᵀKᵀ`.
pub fn tracking_erm_bias(k: &Matrix, mean_z: &[f64], system: &TrackingSystem) -> Result<Vec<f64>, ControlError> {
    if mean_z.len() != system.state_dim() {
        return Err(ControlError::Shape(format!("target has length {}, expected {}", mean_z.len(), system.state_dim())));
    }
    let m = tracking_gain_map(k, system)?;
    let km = k * &m;
    let mt = m.transpose();
    let g = &(&(&(&mt * &(&system.q + &(&k.transpose() * k))) * &m) + &Matrix::identity(m.cols()))
        + &(&km + &km.transpose());
    let rhs = mt.mul_vec(&system.q.mul_vec(mean_z));
    Ok(solve_linear(&g.symmetrize(), &rhs)?)
}

#[derive(Debug, Clone)]
pub struct TrackingEnv {
    pub system: TrackingSystem,
}

impl TrackingEnv {
    pub fn new(system: TrackingSystem) -> Self {
        TrackingEnv { system }
    }

    fn stage_cost(&self, p: &TrackingPolicy, x: &[f64], z: &[f64]) -> f64 {
        let e = sub_vec(x, z);
        let u = p.action(x);
        dot(&e, &self.system.q.mul_vec(&e)) + dot(&u, &u)
    }
}

impl Environment for TrackingEnv {
    type State = Vec<f64>;
    type Policy = TrackingPolicy;
    type LossInstance = Vec<f64>;
    type DynInstance = ();
    type Law = Vec<f64>;

    fn name(&self) -> String {
        format!("tracking(d={},k={})", self.system.state_dim(), self.system.input_dim())
    }

    fn initial_state(&self, _: &mut dyn RngCore) -> Vec<f64> {
        vec![0.0; self.system.state_dim()]
    }

    fn step(&self, x: &Vec<f64>, p: &TrackingPolicy, _: &(), _: &mut dyn RngCore) -> Vec<f64> {
        self.law_step(x, p, &())
    }

    fn loss(&self, p: &TrackingPolicy, x: &Vec<f64>, z: &Vec<f64>) -> f64 {
        self.stage_cost(p, x, z)
    }

    /// `‖Q‖(c_x + c_z)² + (c_K c_x + c_η')²`.
    fn loss_bound(&self) -> f64 {
        let s = &self.system;
        let cx = s.state_bound();
        s.q_norm * (cx + s.c_z).powi(2) + (s.c_k * cx + s.extended_bias_bound()).powi(2)
    }

    fn is_deterministic(&self) -> bool {
        true
    }

    fn check_policy(&self, p: &TrackingPolicy) -> Result<(), String> {
        self.system.check_gain(&p.k)?;
        check_vec_norm(&p.eta, self.system.input_dim(), self.system.extended_bias_bound(), "η")
    }

    fn check_loss_instance(&self, z: &Vec<f64>) -> Result<(), String> {
        check_vec_norm(z, self.system.state_dim(), self.system.c_z, "z")
    }

    fn check_dyn_instance(&self, _: &()) -> Result<(), String> {
        Ok(())
    }

    fn policy_label(&self, p: &TrackingPolicy) -> String {
        let eta: Vec<String> = p.eta.iter().map(|v| format!("{v}")).collect();
        format!("{};eta[{}]", format_matrix_label("K", &p.k), eta.join(";"))
    }

    fn has_exact_law(&self) -> bool {
        true
    }

    fn initial_law(&self) -> Vec<f64> {
        vec![0.0; self.system.state_dim()]
    }

    fn law_loss(&self, p: &TrackingPolicy, x: &Vec<f64>, z: &Vec<f64>) -> f64 {
        self.stage_cost(p, x, z)
    }

    fn law_step(&self, x: &Vec<f64>, p: &TrackingPolicy, _: &()) -> Vec<f64> {
        let u = p.action(x);
        let mut next = self.system.a.mul_vec(x);
        for (n, bu) in next.iter_mut().zip(self.system.b.mul_vec(&u)) {
            *n += bu;
        }
        next
    }

    fn stationary_loss(&self, p: &TrackingPolicy, z: &Vec<f64>) -> Result<f64, CapabilityError> {
        let x = tracking_stationary_state(&p.k, &p.eta, &self.system)
            .map_err(|e| CapabilityError::Unsupported(e.to_string()))?;
        Ok(self.stage_cost(p, &x, z))
    }
}

/// Biases `η ∈ [−bound, bound]^k` for a fixed gain.
pub struct BiasBox {
    pub k: Matrix,
    pub bound: f64,
}

impl ParamFamily<TrackingPolicy> for BiasBox {
    fn lower(&self) -> Vec<f64> {
        vec![-self.bound; self.k.rows()]
    }

    fn upper(&self) -> Vec<f64> {
        vec![self.bound; self.k.rows()]
    }

    fn decode(&self, theta: &[f64]) -> Option<TrackingPolicy> {
        Some(TrackingPolicy { k: self.k.clone(), eta: theta.to_vec() })
    }

    fn encode(&self, p: &TrackingPolicy) -> Vec<f64> {
        p.eta.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(a: f64) -> TrackingSystem {
        TrackingSystem::new(Matrix::scalar(a), Matrix::scalar(1.0), Matrix::scalar(1.0), 1.0, 1.0, 1.0, 0.9).unwrap()
    }

    #[test]
    fn stationary_state_examples() {
        let k = Matrix::scalar(0.0);
        assert_eq!(tracking_stationary_state(&k, &[0.0], &scalar(0.5)).unwrap(), vec![0.0]);
        // oracle: iterate x ← 0.5x + 1
        let mut x = 0.0;
        for _ in 0..200 {
            x = 0.5 * x + 1.0;
        }
        let got = tracking_stationary_state(&k, &[1.0], &scalar(0.5)).unwrap()[0];
        assert!((got - x).abs() < 1e-12);
        assert!((tracking_stationary_state(&k, &[0.7], &scalar(0.0)).unwrap()[0] - 0.7).abs() < 1e-15);
    }

    #[test]
    fn erm_bias_scalar_example() {
        let sys = scalar(0.0);
        let k = Matrix::scalar(0.0);
        let eta = tracking_erm_bias(&k, &[1.0], &sys).unwrap()[0];
        assert!((eta - 0.5).abs() < 1e-14);
        // (η−1)² + η² on a fine grid
        let best = (0..=200_000)
            .map(|i| -1.0 + 2.0 * i as f64 / 200_000.0)
            .min_by(|a, b| ((a - 1.0f64).powi(2) + a * a).total_cmp(&((b - 1.0f64).powi(2) + b * b)))
            .unwrap();
        assert!((best - eta).abs() < 1e-5);
        assert_eq!(tracking_erm_bias(&k, &[0.0], &sys).unwrap(), vec![0.0]);
    }

    #[test]
    fn stationary_loss_matches_long_rollout() {
        let env = TrackingEnv::new(scalar(0.5));
        let p = TrackingPolicy { k: Matrix::scalar(-0.2), eta: vec![0.3] };
        let z = vec![0.4];
        let mut x = env.initial_law();
        for _ in 0..200 {
            x = env.law_step(&x, &p, &());
        }
        let rolled = env.law_loss(&p, &x, &z);
        assert!((rolled - env.stationary_loss(&p, &z).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn rejects_gain_outside_contraction() {
        let env = TrackingEnv::new(scalar(0.5));
        let p = TrackingPolicy { k: Matrix::scalar(0.45), eta: vec![0.0] };
        assert!(env.check_policy(&p).is_err());
    }
}
