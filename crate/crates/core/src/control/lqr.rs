//! Online LQR with Gaussian process noise and adversarial costs.
//!
//! The state starts from `x_0 = 0`, so `x_1 ~ N(0, W)` and the second
//! moment after `t` rounds of a fixed gain is
//! `X_{K,t} = Σ_{s<t} Ãˢ W (Ãˢ)ᵀ` with `Ã = A + BK`. The stationary
//! covariance `X_K` solves `X = Ã X Ãᵀ + W`.

use std::sync::Arc;

use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};

use super::{check_psd_with_trace, eig_range, ControlError, CERT_SLACK};
use crate::game::{CapabilityError, Environment};
use crate::linalg::{inverse, matrix_sqrt_psd, solve_discrete_lyapunov, spectral_norm, LinalgError, Matrix};
use crate::rng::mix64;
use crate::search::ParamFamily;

/// Time-invariant system with policy-class parameters `(κ, γ)`.
#[derive(Debug, Clone)]
pub struct LqrSystem {
    a: Matrix,
    b: Matrix,
    w: Matrix,
    w_sqrt: Matrix,
    /// `‖W‖₂ ≤ σ_w`.
    pub sigma_w: f64,
    /// `tr(W) ≤ Ψ_w`.
    pub psi_w: f64,
    /// `W ⪰ τ_w I`.
    pub tau_w: f64,
    pub kappa: f64,
    pub gamma: f64,
    /// Bound `C` on `tr(Q)` and `tr(R)`.
    pub cost_trace: f64,
    fingerprint: u64,
}

fn fingerprint(parts: &[&Matrix], scalars: &[f64]) -> u64 {
    let mut h = 0x5EED_u64;
    for m in parts {
        h = mix64(h ^ m.rows() as u64);
        h = mix64(h ^ m.cols() as u64);
        for v in m.as_slice() {
            h = mix64(h ^ v.to_bits());
        }
    }
    for v in scalars {
        h = mix64(h ^ v.to_bits());
    }
    h
}

impl LqrSystem {
    /// Builds a system whose noise bounds are the exact spectrum of `W`.
    pub fn new(a: Matrix, b: Matrix, w: Matrix, kappa: f64, gamma: f64, cost_trace: f64) -> Result<Self, ControlError> {
        let (lo, hi) = eig_range(&w.symmetrize())?;
        let trace = w.trace();
        Self::with_bounds(a, b, w, hi, trace, lo.max(0.0), kappa, gamma, cost_trace)
    }

    /// System whose `(κ, γ)` are the tightest constants certifying `k`, up
    /// to a relative margin `1e-6`. Errors when `A + BK` is unstable.
    pub fn tight_for(a: Matrix, b: Matrix, w: Matrix, k: &Matrix, cost_trace: f64) -> Result<Self, ControlError> {
        let probe = Self::new(a.clone(), b.clone(), w.clone(), f64::MAX, 0.5, cost_trace)?;
        let cert = strong_stability_certificate(k, &probe)?;
        if cert.failures.contains(&CertificateFailure::Unstable) || !(cert.norm_l < 1.0) {
            return Err(ControlError::Uncertified("closed loop is not stable".into()));
        }
        let kappa = cert.norm_k.max(cert.conditioning).max(1.0) * (1.0 + 1e-6);
        let gamma = (1.0 - cert.norm_l) * (1.0 - 1e-6);
        Self::new(a, b, w, kappa, gamma, cost_trace)
    }

    /// Builds a system with declared noise bounds, verified against the
    /// spectrum of `W`.
    #[allow(clippy::too_many_arguments)]
    pub fn with_bounds(
        a: Matrix,
        b: Matrix,
        w: Matrix,
        sigma_w: f64,
        psi_w: f64,
        tau_w: f64,
        kappa: f64,
        gamma: f64,
        cost_trace: f64,
    ) -> Result<Self, ControlError> {
        let d = a.rows();
        if d == 0 || !a.is_square() {
            return Err(ControlError::InvalidSystem(format!("A must be square and nonempty, got {:?}", a.shape())));
        }
        if b.rows() != d || b.cols() == 0 {
            return Err(ControlError::InvalidSystem(format!("B must be {d}xk with k ≥ 1, got {:?}", b.shape())));
        }
        if w.shape() != (d, d) {
            return Err(ControlError::InvalidSystem(format!("W must be {d}x{d}, got {:?}", w.shape())));
        }
        if (&w - &w.transpose()).max_abs() > 1e-12 * (1.0 + w.max_abs()) {
            return Err(ControlError::InvalidSystem("W is not symmetric".into()));
        }
        if !(kappa > 0.0) || !(gamma > 0.0 && gamma < 1.0) {
            return Err(ControlError::InvalidSystem(format!("need κ > 0 and 0 < γ < 1, got κ={kappa}, γ={gamma}")));
        }
        if !(cost_trace >= 0.0) {
            return Err(ControlError::InvalidSystem(format!("cost trace bound must be ≥ 0, got {cost_trace}")));
        }
        let (lo, hi) = eig_range(&w)?;
        if lo < -1e-10 {
            return Err(ControlError::InvalidSystem(format!("W has negative eigenvalue {lo:e}")));
        }
        if hi > sigma_w + CERT_SLACK {
            return Err(ControlError::InvalidSystem(format!("‖W‖₂ = {hi} exceeds σ_w = {sigma_w}")));
        }
        if w.trace() > psi_w + CERT_SLACK {
            return Err(ControlError::InvalidSystem(format!("tr(W) = {} exceeds Ψ_w = {psi_w}", w.trace())));
        }
        if lo < tau_w - CERT_SLACK || tau_w < 0.0 {
            return Err(ControlError::InvalidSystem(format!("λ_min(W) = {lo} is below τ_w = {tau_w}")));
        }
        let w_sqrt = matrix_sqrt_psd(&w)?;
        let fingerprint = fingerprint(&[&a, &b, &w], &[kappa, gamma]);
        Ok(LqrSystem { a, b, w, w_sqrt, sigma_w, psi_w, tau_w, kappa, gamma, cost_trace, fingerprint })
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }

    pub fn b(&self) -> &Matrix {
        &self.b
    }

    pub fn w(&self) -> &Matrix {
        &self.w
    }

    pub fn state_dim(&self) -> usize {
        self.a.rows()
    }

    pub fn input_dim(&self) -> usize {
        self.b.cols()
    }

    /// `A + BK`.
    pub fn closed_loop(&self, k: &Matrix) -> Matrix {
        &self.a + &(&self.b * k)
    }

    /// `σ_b := ‖B‖₂`.
    pub fn b_norm(&self) -> f64 {
        spectral_norm(&self.b)
    }

    /// Certifies `K` and caches its stationary covariance.
    pub fn certify(&self, k: Matrix) -> Result<LinearGain, ControlError> {
        let cert = strong_stability_certificate(&k, self)?;
        if !cert.valid {
            let reasons: Vec<String> = cert.failures.iter().map(|f| f.to_string()).collect();
            return Err(ControlError::Uncertified(reasons.join(", ")));
        }
        let x_k = cert.x_k.expect("valid certificates carry X_K");
        Ok(LinearGain { k, stationary: Some(Arc::new(CachedCovariance { x_k, fingerprint: self.fingerprint })) })
    }

    /// `B_max = C(1 + κ²) σ_w κ² / γ`, a bound on the stationary loss.
    pub fn stationary_loss_bound(&self) -> f64 {
        let k2 = self.kappa * self.kappa;
        self.cost_trace * (1.0 + k2) * self.sigma_w * k2 / self.gamma
    }

    /// `L_Lip = 4C(1 + κ²) σ_b κ⁵ σ_w / γ²`.
    pub fn lipschitz_constant(&self) -> f64 {
        let k = self.kappa;
        4.0 * self.cost_trace * (1.0 + k * k) * self.b_norm() * k.powi(5) * self.sigma_w / (self.gamma * self.gamma)
    }

    /// `(σ_q + κ²σ_r) Ψ_w κ² (1−γ)^{2t} / γ`.
    pub fn mixing_gap_envelope(&self, t: usize, sigma_q: f64, sigma_r: f64) -> f64 {
        let k2 = self.kappa * self.kappa;
        (sigma_q + k2 * sigma_r) * self.psi_w * k2 * (1.0 - self.gamma).powi(2 * t as i32) / self.gamma
    }

    /// `(σ_q + κ²σ_r) Ψ_w κ² / γ²`.
    pub fn mixing_gap_sum_envelope(&self, sigma_q: f64, sigma_r: f64) -> f64 {
        let k2 = self.kappa * self.kappa;
        (sigma_q + k2 * sigma_r) * self.psi_w * k2 / (self.gamma * self.gamma)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CertificateFailure {
    /// `‖K‖₂ > κ`.
    NormBound,
    /// `‖L‖₂ > 1 − γ`.
    Contraction,
    /// `‖H‖₂‖H⁻¹‖₂ > κ`.
    Conditioning,
    /// `H L H⁻¹` differs from `A + BK` by more than `1e-8`.
    Reconstruction,
    /// The closed loop is not stable, so `X_K` does not exist.
    Unstable,
}

impl std::fmt::Display for CertificateFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            CertificateFailure::NormBound => "norm bound",
            CertificateFailure::Contraction => "contraction",
            CertificateFailure::Conditioning => "conditioning",
            CertificateFailure::Reconstruction => "reconstruction",
            CertificateFailure::Unstable => "unstable closed loop",
        })
    }
}

/// Outcome of [`strong_stability_certificate`].
#[derive(Debug, Clone)]
pub struct StabilityCertificate {
    pub k: Matrix,
    pub h: Option<Matrix>,
    pub l: Option<Matrix>,
    pub x_k: Option<Matrix>,
    pub kappa: f64,
    pub gamma: f64,
    pub norm_k: f64,
    /// `‖L‖₂`; NaN when the closed loop is unstable.
    pub norm_l: f64,
    /// `‖H‖₂‖H⁻¹‖₂`; NaN when the closed loop is unstable.
    pub conditioning: f64,
    pub valid: bool,
    pub failures: Vec<CertificateFailure>,
}

/// Checks `(κ, γ)`-strong stability of `K` with `H = X_K^{1/2}` and
/// `L = H⁻¹(A + BK)H`.
pub fn strong_stability_certificate(k: &Matrix, system: &LqrSystem) -> Result<StabilityCertificate, ControlError> {
    if k.shape() != (system.input_dim(), system.state_dim()) {
        return Err(ControlError::Shape(format!(
            "K must be {}x{}, got {:?}",
            system.input_dim(),
            system.state_dim(),
            k.shape()
        )));
    }
    if system.tau_w <= 0.0 {
        return Err(ControlError::DegenerateNoise);
    }
    let acl = system.closed_loop(k);
    let norm_k = spectral_norm(k);
    let mut failures = Vec::new();
    if norm_k > system.kappa + CERT_SLACK {
        failures.push(CertificateFailure::NormBound);
    }
    let solution = match solve_discrete_lyapunov(&acl, &system.w) {
        Ok(s) => s,
        Err(LinalgError::Divergence { .. }) | Err(LinalgError::Residual { .. }) => {
            failures.push(CertificateFailure::Unstable);
            return Ok(StabilityCertificate {
                k: k.clone(),
                h: None,
                l: None,
                x_k: None,
                kappa: system.kappa,
                gamma: system.gamma,
                norm_k,
                norm_l: f64::NAN,
                conditioning: f64::NAN,
                valid: false,
                failures,
            });
        }
        Err(e) => return Err(e.into()),
    };
    let h = matrix_sqrt_psd(&solution.x)?;
    let h_inv = inverse(&h).map_err(|_| ControlError::DegenerateNoise)?;
    let l = &(&h_inv * &acl) * &h;
    let reconstruction = (&(&(&h * &l) * &h_inv) - &acl).max_abs();
    let norm_l = spectral_norm(&l);
    let conditioning = spectral_norm(&h) * spectral_norm(&h_inv);
    if norm_l > 1.0 - system.gamma + CERT_SLACK {
        failures.push(CertificateFailure::Contraction);
    }
    if conditioning > system.kappa + CERT_SLACK {
        failures.push(CertificateFailure::Conditioning);
    }
    if reconstruction > CERT_SLACK {
        failures.push(CertificateFailure::Reconstruction);
    }
    Ok(StabilityCertificate {
        k: k.clone(),
        h: Some(h),
        l: Some(l),
        x_k: Some(solution.x),
        kappa: system.kappa,
        gamma: system.gamma,
        norm_k,
        norm_l,
        conditioning,
        valid: failures.is_empty(),
        failures,
    })
}

#[derive(Debug)]
struct CachedCovariance {
    x_k: Matrix,
    fingerprint: u64,
}

/// Linear state feedback `u = Kx`, optionally carrying its certified
/// stationary covariance.
#[derive(Debug, Clone)]
pub struct LinearGain {
    k: Matrix,
    stationary: Option<Arc<CachedCovariance>>,
}

impl PartialEq for LinearGain {
    fn eq(&self, other: &Self) -> bool {
        self.k == other.k
    }
}

impl LinearGain {
    /// An uncertified gain; environments certify it on first use.
    pub fn new(k: Matrix) -> Self {
        LinearGain { k, stationary: None }
    }

    pub fn k(&self) -> &Matrix {
        &self.k
    }

    /// `X_K` if this gain was certified against `system`.
    pub fn stationary_covariance(&self, system: &LqrSystem) -> Option<&Matrix> {
        self.stationary.as_ref().filter(|c| c.fingerprint == system.fingerprint).map(|c| &c.x_k)
    }
}

/// Adversarial cost pair `(Q_t, R_t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CostPair {
    pub q: Matrix,
    pub r: Matrix,
}

impl CostPair {
    /// `Q + KᵀRK`.
    pub fn effective(&self, k: &Matrix) -> Matrix {
        &self.q + &(&k.transpose() * &(&self.r * k))
    }

    pub fn zero(d: usize, k: usize) -> Self {
        CostPair { q: Matrix::zeros(d, d), r: Matrix::zeros(k, k) }
    }
}

/// `ℓ*(K, z) = tr((Q + KᵀRK) X_K)` for a certified gain.
pub fn lqr_stationary_loss(gain: &LinearGain, z: &CostPair, system: &LqrSystem) -> Result<f64, ControlError> {
    let x_k = match gain.stationary_covariance(system) {
        Some(x) => x.clone(),
        None => system.certify(gain.k.clone())?.stationary.expect("certified").x_k.clone(),
    };
    Ok(z.effective(&gain.k).inner(&x_k))
}

/// `tr((Q + KᵀRK) X_{K,t})`, the exact expected loss at round `t` of a
/// gain played from round 1.
pub fn lqr_counterfactual_loss(k: &Matrix, z: &CostPair, t: usize, system: &LqrSystem) -> f64 {
    let acl = system.closed_loop(k);
    let mut x = system.w.clone();
    for _ in 1..t {
        x = &acl.congruence(&x) + &system.w;
    }
    z.effective(k).inner(&x)
}

/// Environment wrapper around an [`LqrSystem`].
#[derive(Debug, Clone)]
pub struct LqrEnv {
    pub system: Arc<LqrSystem>,
}

impl LqrEnv {
    pub fn new(system: LqrSystem) -> Self {
        LqrEnv { system: Arc::new(system) }
    }
}

impl Environment for LqrEnv {
    type State = Vec<f64>;
    type Policy = LinearGain;
    type LossInstance = CostPair;
    type DynInstance = ();
    type Law = Matrix;

    fn name(&self) -> String {
        format!("lqr(d={},k={})", self.system.state_dim(), self.system.input_dim())
    }

    fn initial_state(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        gaussian(&self.system.w_sqrt, rng)
    }

    fn step(&self, x: &Vec<f64>, p: &LinearGain, _: &(), rng: &mut dyn RngCore) -> Vec<f64> {
        let mut next = self.system.closed_loop(&p.k).mul_vec(x);
        for (n, w) in next.iter_mut().zip(gaussian(&self.system.w_sqrt, rng)) {
            *n += w;
        }
        next
    }

    fn loss(&self, p: &LinearGain, x: &Vec<f64>, z: &CostPair) -> f64 {
        let u = p.k.mul_vec(x);
        crate::linalg::dot(x, &z.q.mul_vec(x)) + crate::linalg::dot(&u, &z.r.mul_vec(&u))
    }

    /// Gaussian states make realized losses unbounded; the stationary loss
    /// is bounded by [`LqrSystem::stationary_loss_bound`].
    fn loss_bound(&self) -> f64 {
        f64::INFINITY
    }

    fn is_deterministic(&self) -> bool {
        self.system.w.max_abs() == 0.0
    }

    fn check_policy(&self, p: &LinearGain) -> Result<(), String> {
        if p.stationary_covariance(&self.system).is_some() {
            return Ok(());
        }
        self.system.certify(p.k.clone()).map(|_| ()).map_err(|e| e.to_string())
    }

    fn check_loss_instance(&self, z: &CostPair) -> Result<(), String> {
        check_psd_with_trace(&z.q, self.system.state_dim(), self.system.cost_trace, "Q")?;
        check_psd_with_trace(&z.r, self.system.input_dim(), self.system.cost_trace, "R")
    }

    fn check_dyn_instance(&self, _: &()) -> Result<(), String> {
        Ok(())
    }

    fn policy_label(&self, p: &LinearGain) -> String {
        format_matrix_label("K", &p.k)
    }

    fn has_exact_law(&self) -> bool {
        true
    }

    fn initial_law(&self) -> Matrix {
        self.system.w.clone()
    }

    fn law_loss(&self, p: &LinearGain, law: &Matrix, z: &CostPair) -> f64 {
        z.effective(&p.k).inner(law)
    }

    fn law_step(&self, law: &Matrix, p: &LinearGain, _: &()) -> Matrix {
        &self.system.closed_loop(&p.k).congruence(law) + &self.system.w
    }

    fn stationary_loss(&self, p: &LinearGain, z: &CostPair) -> Result<f64, CapabilityError> {
        lqr_stationary_loss(p, z, &self.system).map_err(|e| CapabilityError::Unsupported(e.to_string()))
    }

    fn combine_instances(&self, a: &CostPair, b: &CostPair) -> Option<CostPair> {
        Some(CostPair { q: &a.q + &b.q, r: &a.r + &b.r })
    }
}

fn gaussian(sqrt_cov: &Matrix, rng: &mut dyn RngCore) -> Vec<f64> {
    let g: Vec<f64> = (0..sqrt_cov.cols()).map(|_| StandardNormal.sample(rng)).collect();
    sqrt_cov.mul_vec(&g)
}

pub(crate) fn format_matrix_label(name: &str, m: &Matrix) -> String {
    let entries: Vec<String> = m.as_slice().iter().map(|v| format!("{v}")).collect();
    format!("{name}[{}]", entries.join(";"))
}

/// Gains in the box `[−bound, bound]^{k×d}` that pass the certificate.
pub struct GainBox {
    pub system: Arc<LqrSystem>,
    pub bound: f64,
}

impl ParamFamily<LinearGain> for GainBox {
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
        p.k.as_slice().to_vec()
    }
}
