//! Single-index regression with a slowly moving offset.
//!
//! A policy is `f = (σ, w₁, w)` with `σ` piecewise linear on uniform knots
//! over `[−1, 1]`. The loss of `f` at scalar state `x` against
//! `z = (z₁, a, y)` is `(y − σ(⟨a, w⟩))² + (z₁ − w₁)² + (x − w₁)²`, and the
//! state moves to `w₁`.

use rand::RngCore;

use crate::game::{CapabilityError, Environment};
use crate::linalg::{dot, norm2};
use crate::search::{ErmOracle, SearchError};

/// Number of knots of the link function.
pub const KNOTS: usize = 16;

/// Outer alternating-minimization rounds of the ERM.
pub const ERM_ROUNDS: usize = 50;

const SLACK: f64 = 1e-12;

fn knot_spacing() -> f64 {
    2.0 / (KNOTS - 1) as f64
}

/// Piecewise-linear `σ: [−1,1] → [−1,1]` through `values` at uniform knots.
#[derive(Debug, Clone, PartialEq)]
pub struct Link {
    pub values: Vec<f64>,
}

impl Link {
    pub fn identity() -> Self {
        Link { values: (0..KNOTS).map(|i| -1.0 + i as f64 * knot_spacing()).collect() }
    }

    pub fn constant(c: f64) -> Self {
        Link { values: vec![c; KNOTS] }
    }

    /// Checks the range and the slope bound `|Δv| ≤ h`.
    pub fn check(&self) -> Result<(), String> {
        if self.values.len() != KNOTS {
            return Err(format!("link has {} knots, expected {KNOTS}", self.values.len()));
        }
        if self.values.iter().any(|v| !(v.abs() <= 1.0 + SLACK)) {
            return Err("link values must lie in [−1, 1]".into());
        }
        let h = knot_spacing();
        for w in self.values.windows(2) {
            if (w[1] - w[0]).abs() > h * (1.0 + 1e-9) {
                return Err(format!("link slope {} exceeds 1", (w[1] - w[0]) / h));
            }
        }
        Ok(())
    }

    /// Segment index and interpolation weight for `a` clamped to `[−1, 1]`.
    fn locate(a: f64) -> (usize, f64) {
        let s = (a.clamp(-1.0, 1.0) + 1.0) / knot_spacing();
        let i = (s.floor() as usize).min(KNOTS - 2);
        (i, s - i as f64)
    }

    pub fn eval(&self, a: f64) -> f64 {
        let (i, w) = Self::locate(a);
        (1.0 - w) * self.values[i] + w * self.values[i + 1]
    }

    /// `σ'(a)` on the open segment containing `a`; 0 outside `(−1, 1)`.
    pub fn slope(&self, a: f64) -> f64 {
        if a <= -1.0 || a >= 1.0 {
            return 0.0;
        }
        let (i, _) = Self::locate(a);
        (self.values[i + 1] - self.values[i]) / knot_spacing()
    }

    /// A feasible link near `values`: clamp to the range, then sweep the
    /// slope bound left to right.
    fn repair(values: &mut [f64]) {
        let h = knot_spacing();
        values[0] = values[0].clamp(-1.0, 1.0);
        for i in 1..values.len() {
            let lo = (values[i - 1] - h).max(-1.0);
            let hi = (values[i - 1] + h).min(1.0);
            values[i] = values[i].clamp(lo, hi);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IsotronPolicy {
    pub link: Link,
    pub w1: f64,
    pub w: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IsotronInstance {
    pub z1: f64,
    pub a: Vec<f64>,
    pub y: f64,
}

/// `(y − σ(⟨a, w⟩))² + (z₁ − w₁)² + (x − w₁)²`.
pub fn isotron_loss(f: &IsotronPolicy, x: f64, z: &IsotronInstance) -> f64 {
    let r = z.y - f.link.eval(dot(&z.a, &f.w));
    r * r + (z.z1 - f.w1).powi(2) + (x - f.w1).powi(2)
}

/// Next state after playing `f`.
pub fn isotron_next_state(f: &IsotronPolicy) -> f64 {
    f.w1
}

#[derive(Debug, Clone)]
pub struct IsotronEnv {
    pub dim: usize,
}

impl IsotronEnv {
    pub fn new(dim: usize) -> Self {
        assert!(dim >= 1, "dimension must be positive");
        IsotronEnv { dim }
    }
}

impl Environment for IsotronEnv {
    type State = f64;
    type Policy = IsotronPolicy;
    type LossInstance = IsotronInstance;
    type DynInstance = ();
    type Law = f64;

    fn name(&self) -> String {
        format!("isotron(d={})", self.dim)
    }

    fn initial_state(&self, _: &mut dyn RngCore) -> f64 {
        0.0
    }

    fn step(&self, _: &f64, f: &IsotronPolicy, _: &(), _: &mut dyn RngCore) -> f64 {
        isotron_next_state(f)
    }

    fn loss(&self, f: &IsotronPolicy, x: &f64, z: &IsotronInstance) -> f64 {
        isotron_loss(f, *x, z)
    }

    fn loss_bound(&self) -> f64 {
        12.0
    }

    fn is_deterministic(&self) -> bool {
        true
    }

    fn check_policy(&self, f: &IsotronPolicy) -> Result<(), String> {
        f.link.check()?;
        if f.w.len() != self.dim {
            return Err(format!("w has length {}, expected {}", f.w.len(), self.dim));
        }
        if !(f.w1.abs() <= 1.0 + SLACK) {
            return Err(format!("|w₁| = {} exceeds 1", f.w1.abs()));
        }
        if !(norm2(&f.w) <= 1.0 + SLACK) {
            return Err(format!("‖w‖ = {} exceeds 1", norm2(&f.w)));
        }
        Ok(())
    }

    fn check_loss_instance(&self, z: &IsotronInstance) -> Result<(), String> {
        if z.a.len() != self.dim {
            return Err(format!("covariate has length {}, expected {}", z.a.len(), self.dim));
        }
        let inside = |v: f64| v.abs() <= 1.0;
        if !(inside(z.z1) && inside(z.y) && z.a.iter().all(|v| inside(*v))) {
            return Err("instance coordinates must lie in [−1, 1]".into());
        }
        Ok(())
    }

    fn check_dyn_instance(&self, _: &()) -> Result<(), String> {
        Ok(())
    }

    fn policy_label(&self, f: &IsotronPolicy) -> String {
        let w: Vec<String> = f.w.iter().map(|v| format!("{v}")).collect();
        format!("w1={};w[{}]", f.w1, w.join(";"))
    }

    fn has_exact_law(&self) -> bool {
        true
    }

    fn initial_law(&self) -> f64 {
        0.0
    }

    fn law_loss(&self, f: &IsotronPolicy, x: &f64, z: &IsotronInstance) -> f64 {
        isotron_loss(f, *x, z)
    }

    fn law_step(&self, _: &f64, f: &IsotronPolicy, _: &()) -> f64 {
        isotron_next_state(f)
    }

    fn stationary_loss(&self, f: &IsotronPolicy, z: &IsotronInstance) -> Result<f64, CapabilityError> {
        Ok(isotron_loss(f, f.w1, z))
    }
}

/// Offset minimizing the cumulative counterfactual loss over `n` rounds:
/// `Σ_s (z_{s,1} − w₁)² + w₁²`, whose minimizer is `Σ_s z_{s,1}/(n + 1)`.
pub fn isotron_erm_offset(zs: &[IsotronInstance]) -> f64 {
    let s: f64 = zs.iter().map(|z| z.z1).sum();
    (s / (zs.len() + 1) as f64).clamp(-1.0, 1.0)
}

fn regression_residual(link: &Link, w: &[f64], zs: &[IsotronInstance]) -> f64 {
    zs.iter().map(|z| (z.y - link.eval(dot(&z.a, w))).powi(2)).sum()
}

/// Approximate ERM over `(σ, w)` by alternating projected gradient steps,
/// starting from the identity link and `w = 0`; `w₁` is exact.
pub fn isotron_erm(dim: usize, zs: &[IsotronInstance]) -> IsotronPolicy {
    let w1 = isotron_erm_offset(zs);
    let mut link = Link::identity();
    let mut w = vec![0.0; dim];
    if zs.is_empty() {
        return IsotronPolicy { link, w1, w };
    }
    let n = zs.len() as f64;
    let h = knot_spacing();
    for _ in 0..ERM_ROUNDS {
        // link step: gradient of the mean squared residual in knot values
        let mut grad = vec![0.0; KNOTS];
        for z in zs {
            let a = dot(&z.a, &w);
            let (i, t) = Link::locate(a);
            let r = link.eval(a) - z.y;
            grad[i] += 2.0 * r * (1.0 - t) / n;
            grad[i + 1] += 2.0 * r * t / n;
        }
        let mut trial = link.values.clone();
        for (v, g) in trial.iter_mut().zip(&grad) {
            *v -= 0.5 * KNOTS as f64 * g * h;
        }
        Link::repair(&mut trial);
        let trial = Link { values: trial };
        if regression_residual(&trial, &w, zs) <= regression_residual(&link, &w, zs) {
            link = trial;
        }

        // direction step on the unit ball
        let mut gw = vec![0.0; dim];
        for z in zs {
            let a = dot(&z.a, &w);
            let r = link.eval(a) - z.y;
            let s = link.slope(a);
            for (g, ai) in gw.iter_mut().zip(&z.a) {
                *g += 2.0 * r * s * ai / n;
            }
        }
        let mut trial: Vec<f64> = w.iter().zip(&gw).map(|(wi, g)| wi - 0.5 * g / dim as f64).collect();
        let norm = norm2(&trial);
        if norm > 1.0 {
            trial.iter_mut().for_each(|v| *v /= norm);
        }
        if regression_residual(&link, &trial, zs) <= regression_residual(&link, &w, zs) {
            w = trial;
        }
    }
    IsotronPolicy { link, w1, w }
}

/// Comparator search through [`isotron_erm`].
pub struct IsotronOracle {
    pub dim: usize,
}

impl ErmOracle<IsotronEnv> for IsotronOracle {
    fn name(&self) -> String {
        "isotron-alternating".into()
    }

    fn minimize(&self, env: &IsotronEnv, zs: &[IsotronInstance], _: &[()]) -> Result<(IsotronPolicy, f64), SearchError> {
        let f = isotron_erm(self.dim, zs);
        let mut x = env.initial_law();
        let mut total = 0.0;
        for z in zs {
            total += env.law_loss(&f, &x, z);
            x = env.law_step(&x, &f, &());
        }
        Ok((f, total))
    }
}
