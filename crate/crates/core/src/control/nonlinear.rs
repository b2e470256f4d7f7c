//! Deterministic nonlinear dynamics `x⁺ = σ(Ax + Bπ_θ(x))` with affine
//! policies `π_θ(x) = Kx + e` and a bounded, Lipschitz tracking loss.

use rand::RngCore;

use super::lqr::format_matrix_label;
use super::{check_vec_norm, ControlError, CERT_SLACK};
use crate::game::{CapabilityError, Environment};
use crate::linalg::{norm2, spectral_norm, sub_vec, Matrix};
use crate::search::ParamFamily;

/// Elementwise 1-Lipschitz squashing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation {
    Tanh,
    /// Clamp every coordinate to `[−c, c]`.
    Clip(f64),
}

impl Activation {
    pub fn apply(&self, v: &mut [f64]) {
        match *self {
            Activation::Tanh => v.iter_mut().for_each(|x| *x = x.tanh()),
            Activation::Clip(c) => v.iter_mut().for_each(|x| *x = x.clamp(-c, c)),
        }
    }

    /// Bound on `‖σ(v)‖₂` in dimension `d`.
    pub fn range_bound(&self, d: usize) -> f64 {
        let per = match *self {
            Activation::Tanh => 1.0,
            Activation::Clip(c) => c,
        };
        per * (d as f64).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NonlinearPolicy {
    pub k: Matrix,
    pub e: Vec<f64>,
}

impl NonlinearPolicy {
    pub fn action(&self, x: &[f64]) -> Vec<f64> {
        let mut u = self.k.mul_vec(x);
        for (ui, ei) in u.iter_mut().zip(&self.e) {
            *ui += ei;
        }
        u
    }

    /// `θ = (vec K, e)`.
    pub fn params(&self) -> Vec<f64> {
        let mut p = self.k.as_slice().to_vec();
        p.extend_from_slice(&self.e);
        p
    }
}

#[derive(Debug, Clone)]
pub struct NonlinearSystem {
    a: Matrix,
    b: Matrix,
    pub activation: Activation,
    /// Contraction factor of the class is `1 − γ`.
    pub gamma: f64,
    /// `‖θ‖₂ ≤ c_θ`.
    pub c_theta: f64,
    /// Input scale of the control penalty.
    pub u_max: f64,
    /// `‖σ(v)‖₂ ≤ c_x`.
    pub c_x: f64,
    /// `‖π_θ(x) − π_θ'(x)‖ ≤ L_f‖θ − θ'‖` on the state range.
    pub policy_lipschitz: f64,
    /// Lipschitz constant of the loss in the state.
    pub loss_lipschitz_state: f64,
    /// Lipschitz constant of the loss in the parameter.
    pub loss_lipschitz_param: f64,
}

impl NonlinearSystem {
    pub fn new(
        a: Matrix,
        b: Matrix,
        activation: Activation,
        gamma: f64,
        c_theta: f64,
        u_max: f64,
    ) -> Result<Self, ControlError> {
        let d = a.rows();
        if d == 0 || !a.is_square() || b.rows() != d || b.cols() == 0 {
            return Err(ControlError::InvalidSystem(format!("bad shapes A {:?}, B {:?}", a.shape(), b.shape())));
        }
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(ControlError::InvalidSystem(format!("need 0 < γ < 1, got {gamma}")));
        }
        if let Activation::Clip(c) = activation {
            if !(c > 0.0) {
                return Err(ControlError::InvalidSystem(format!("clip level must be positive, got {c}")));
            }
        }
        if !(c_theta >= 0.0 && u_max > 0.0) {
            return Err(ControlError::InvalidSystem("need c_θ ≥ 0 and u_max > 0".into()));
        }
        let c_x = activation.range_bound(d);
        let policy_lipschitz = (c_x * c_x + 1.0).sqrt();
        let loss_lipschitz_state = 1.0 / (2.0 * c_x) + c_theta / u_max;
        let loss_lipschitz_param = policy_lipschitz / u_max;
        Ok(NonlinearSystem {
            a,
            b,
            activation,
            gamma,
            c_theta,
            u_max,
            c_x,
            policy_lipschitz,
            loss_lipschitz_state,
            loss_lipschitz_param,
        })
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }

    pub fn b(&self) -> &Matrix {
        &self.b
    }

    pub fn state_dim(&self) -> usize {
        self.a.rows()
    }

    pub fn input_dim(&self) -> usize {
        self.b.cols()
    }

    pub fn param_dim(&self) -> usize {
        self.input_dim() * self.state_dim() + self.input_dim()
    }

    /// `σ(Ax + Bπ(x))`.
    pub fn next_state(&self, x: &[f64], p: &NonlinearPolicy) -> Vec<f64> {
        let mut next = self.a.mul_vec(x);
        for (n, bu) in next.iter_mut().zip(self.b.mul_vec(&p.action(x))) {
            *n += bu;
        }
        self.activation.apply(&mut next);
        next
    }

    /// `½min(1, ‖x − z‖²/(4c_x²)) + ½min(1, ‖u‖²/u_max²)`.
    pub fn stage_loss(&self, p: &NonlinearPolicy, x: &[f64], z: &[f64]) -> f64 {
        let e = norm2(&sub_vec(x, z));
        let u = norm2(&p.action(x));
        0.5 * (e * e / (4.0 * self.c_x * self.c_x)).min(1.0) + 0.5 * (u * u / (self.u_max * self.u_max)).min(1.0)
    }

    /// `L_{l,θ} + L_{l,x}‖B‖L_f/γ`.
    pub fn stationary_lipschitz(&self) -> f64 {
        self.loss_lipschitz_param + self.loss_lipschitz_state * spectral_norm(&self.b) * self.policy_lipschitz / self.gamma
    }

    pub fn check(&self, p: &NonlinearPolicy) -> Result<(), String> {
        if p.k.shape() != (self.input_dim(), self.state_dim()) || p.e.len() != self.input_dim() {
            return Err(format!("policy shapes K {:?}, e {} do not match the system", p.k.shape(), p.e.len()));
        }
        let theta = norm2(&p.params());
        if theta > self.c_theta + CERT_SLACK {
            return Err(format!("‖θ‖₂ = {theta} exceeds c_θ = {}", self.c_theta));
        }
        let cl = spectral_norm(&(&self.a + &(&self.b * &p.k)));
        if cl > 1.0 - self.gamma + CERT_SLACK {
            return Err(format!("‖A+BK‖₂ = {cl} exceeds 1−γ = {}", 1.0 - self.gamma));
        }
        Ok(())
    }
}

/// Picard iterates from 0 towards `x* = σ(Ax* + Bπ(x*))`.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedPoint {
    pub state: Vec<f64>,
    /// `‖x_{k+1} − x_k‖` for every iteration.
    pub steps: Vec<f64>,
}

pub const FIXED_POINT_CAP: usize = 100_000;

/// Iterates until a step falls below `1e-12`; errors if a step grows by more
/// than the declared factor `1 − γ`.
pub fn nonlinear_fixed_point(p: &NonlinearPolicy, system: &NonlinearSystem) -> Result<FixedPoint, ControlError> {
    let mut x = vec![0.0; system.state_dim()];
    let mut steps = Vec::new();
    for _ in 0..FIXED_POINT_CAP {
        let next = system.next_state(&x, p);
        let step = norm2(&sub_vec(&next, &x));
        if let Some(prev) = steps.last() {
            if step > (1.0 - system.gamma) * prev + 1e-15 {
                return Err(ControlError::Uncertified(format!(
                    "fixed-point step grew from {prev:e} to {step:e}, beyond factor {}",
                    1.0 - system.gamma
                )));
            }
        }
        steps.push(step);
        x = next;
        if step < 1e-12 {
            return Ok(FixedPoint { state: x, steps });
        }
    }
    Err(ControlError::IterationCap(FIXED_POINT_CAP))
}

#[derive(Debug, Clone)]
pub struct NonlinearEnv {
    pub system: NonlinearSystem,
}

impl NonlinearEnv {
    pub fn new(system: NonlinearSystem) -> Self {
        NonlinearEnv { system }
    }
}

impl Environment for NonlinearEnv {
    type State = Vec<f64>;
    type Policy = NonlinearPolicy;
    type LossInstance = Vec<f64>;
    type DynInstance = ();
    type Law = Vec<f64>;

    fn name(&self) -> String {
        format!("nonlinear(d={},k={})", self.system.state_dim(), self.system.input_dim())
    }

    fn initial_state(&self, _: &mut dyn RngCore) -> Vec<f64> {
        vec![0.0; self.system.state_dim()]
    }

    fn step(&self, x: &Vec<f64>, p: &NonlinearPolicy, _: &(), _: &mut dyn RngCore) -> Vec<f64> {
        self.system.next_state(x, p)
    }

    fn loss(&self, p: &NonlinearPolicy, x: &Vec<f64>, z: &Vec<f64>) -> f64 {
        self.system.stage_loss(p, x, z)
    }

    fn loss_bound(&self) -> f64 {
        1.0
    }

    fn is_deterministic(&self) -> bool {
        true
    }

    fn check_policy(&self, p: &NonlinearPolicy) -> Result<(), String> {
        self.system.check(p)
    }

    fn check_loss_instance(&self, z: &Vec<f64>) -> Result<(), String> {
        check_vec_norm(z, self.system.state_dim(), self.system.c_x, "z")
    }

    fn check_dyn_instance(&self, _: &()) -> Result<(), String> {
        Ok(())
    }

    fn policy_label(&self, p: &NonlinearPolicy) -> String {
        let e: Vec<String> = p.e.iter().map(|v| format!("{v}")).collect();
        format!("{};e[{}]", format_matrix_label("K", &p.k), e.join(";"))
    }

    fn has_exact_law(&self) -> bool {
        true
    }

    fn initial_law(&self) -> Vec<f64> {
        vec![0.0; self.system.state_dim()]
    }

    fn law_loss(&self, p: &NonlinearPolicy, x: &Vec<f64>, z: &Vec<f64>) -> f64 {
        self.system.stage_loss(p, x, z)
    }

    fn law_step(&self, x: &Vec<f64>, p: &NonlinearPolicy, _: &()) -> Vec<f64> {
        self.system.next_state(x, p)
    }

    fn stationary_loss(&self, p: &NonlinearPolicy, z: &Vec<f64>) -> Result<f64, CapabilityError> {
        let fp = nonlinear_fixed_point(p, &self.system).map_err(|e| CapabilityError::Unsupported(e.to_string()))?;
        Ok(self.system.stage_loss(p, &fp.state, z))
    }
}

/// Parameters `θ ∈ [−bound, bound]^{kd + k}` that satisfy the class
/// constraints.
pub struct NonlinearBox {
    pub system: NonlinearSystem,
    pub bound: f64,
}

impl ParamFamily<NonlinearPolicy> for NonlinearBox {
    fn lower(&self) -> Vec<f64> {
        vec![-self.bound; self.system.param_dim()]
    }

    fn upper(&self) -> Vec<f64> {
        vec![self.bound; self.system.param_dim()]
    }

    fn decode(&self, theta: &[f64]) -> Option<NonlinearPolicy> {
        let (k, d) = (self.system.input_dim(), self.system.state_dim());
        let p = NonlinearPolicy { k: Matrix::from_vec(k, d, theta[..k * d].to_vec()), e: theta[k * d..].to_vec() };
        self.system.check(&p).ok().map(|_| p)
    }

    fn encode(&self, p: &NonlinearPolicy) -> Vec<f64> {
        p.params()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(activation: Activation) -> NonlinearSystem {
        NonlinearSystem::new(Matrix::scalar(0.5), Matrix::scalar(1.0), activation, 0.5, 2.0, 1.0).unwrap()
    }

    #[test]
    fn linear_contraction_fixes_origin() {
        let sys = scalar(Activation::Tanh);
        let p = NonlinearPolicy { k: Matrix::scalar(-0.2), e: vec![0.0] };
        let fp = nonlinear_fixed_point(&p, &sys).unwrap();
        assert_eq!(fp.state, vec![0.0]);
    }

    #[test]
    fn clipped_boundary_fixed_point() {
        let sys = scalar(Activation::Clip(2.0));
        let p = NonlinearPolicy { k: Matrix::scalar(0.0), e: vec![1.0] };
        let fp = nonlinear_fixed_point(&p, &sys).unwrap();
        let mut x: f64 = 0.0;
        for _ in 0..100 {
            x = (0.5 * x + 1.0).clamp(-2.0, 2.0);
        }
        assert!((fp.state[0] - x).abs() < 1e-11);
        assert!((fp.state[0] - 2.0).abs() < 1e-11);
        for w in fp.steps.windows(2) {
            assert!(w[1] <= 0.5 * w[0] + 1e-9);
        }
    }

    #[test]
    fn tanh_half_fixes_origin() {
        let sys = scalar(Activation::Tanh);
        let p = NonlinearPolicy { k: Matrix::scalar(0.0), e: vec![0.0] };
        assert_eq!(nonlinear_fixed_point(&p, &sys).unwrap().state, vec![0.0]);
    }

    #[test]
    fn class_rejects_expansive_gain() {
        let sys = scalar(Activation::Tanh);
        let p = NonlinearPolicy { k: Matrix::scalar(0.3), e: vec![0.0] };
        assert!(sys.check(&p).is_err());
    }

    #[test]
    fn loss_lies_in_unit_interval() {
        let sys = scalar(Activation::Clip(2.0));
        let p = NonlinearPolicy { k: Matrix::scalar(-0.5), e: vec![1.0] };
        for x in [-2.0, -0.3, 0.0, 1.7, 2.0] {
            for z in [-2.0, 0.0, 2.0] {
                let l = sys.stage_loss(&p, &[x], &[z]);
                assert!((0.0..=1.0).contains(&l));
            }
        }
    }
}
