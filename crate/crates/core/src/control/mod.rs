//! Linear-quadratic, tracking, nonlinear and adversarial-disturbance
//! control environments.

pub mod adv_lqr;
pub mod lqr;
pub mod nonlinear;
pub mod tracking;

use thiserror::Error;

use crate::linalg::{sym_eigen, LinalgError, Matrix};

pub use adv_lqr::{advlqr_counterfactual_covariance, AdvGainBox, AdvLqrEnv, AdvLqrSystem};
pub use lqr::{
    lqr_counterfactual_loss, lqr_stationary_loss, strong_stability_certificate, CertificateFailure, CostPair,
    GainBox, LinearGain, LqrEnv, LqrSystem, StabilityCertificate,
};
pub use nonlinear::{nonlinear_fixed_point, Activation, FixedPoint, NonlinearBox, NonlinearEnv, NonlinearPolicy, NonlinearSystem};
pub use tracking::{
    tracking_erm_bias, tracking_gain_map, tracking_stationary_state, BiasBox, TrackingEnv, TrackingPolicy, TrackingSystem,
};

/// Absolute slack used by every certificate comparison.
pub const CERT_SLACK: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ControlError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("invalid system: {0}")]
    InvalidSystem(String),
    #[error("noise covariance is singular, so H = X_K^(1/2) is not invertible")]
    DegenerateNoise,
    #[error("policy is not certified: {0}")]
    Uncertified(String),
    #[error("iteration cap of {0} exceeded")]
    IterationCap(usize),
    #[error("shape mismatch: {0}")]
    Shape(String),
}

/// Smallest and largest eigenvalue of a symmetric matrix.
pub(crate) fn eig_range(m: &Matrix) -> Result<(f64, f64), ControlError> {
    let e = sym_eigen(m)?;
    Ok((e.values[0], *e.values.last().expect("nonempty")))
}

pub(crate) fn check_psd_with_trace(m: &Matrix, dim: usize, trace_bound: f64, name: &str) -> Result<(), String> {
    if m.shape() != (dim, dim) {
        return Err(format!("{name} has shape {:?}, expected {dim}x{dim}", m.shape()));
    }
    if !m.is_finite() {
        return Err(format!("{name} has non-finite entries"));
    }
    if (m - &m.transpose()).max_abs() > 1e-9 * (1.0 + m.max_abs()) {
        return Err(format!("{name} is not symmetric"));
    }
    let (lo, _) = eig_range(m).map_err(|e| e.to_string())?;
    if lo < -1e-10 {
        return Err(format!("{name} has negative eigenvalue {lo:e}"));
    }
    if m.trace() > trace_bound + 1e-9 {
        return Err(format!("tr({name}) = {} exceeds {trace_bound}", m.trace()));
    }
    Ok(())
}

pub(crate) fn check_vec_norm(v: &[f64], dim: usize, bound: f64, name: &str) -> Result<(), String> {
    if v.len() != dim {
        return Err(format!("{name} has length {}, expected {dim}", v.len()));
    }
    let n = crate::linalg::norm2(v);
    if !n.is_finite() || n > bound + 1e-9 {
        return Err(format!("‖{name}‖ = {n} exceeds {bound}"));
    }
    Ok(())
}
