use super::ComplexityError;
use crate::game::Environment;
use crate::rollout::{counterfactual_losses, RolloutConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundKind {
    Main,
    Minibatch,
    Ergodic,
}

/// Itemized regret bound. `total` is the left-to-right sum
/// `stability + rademacher + regularization + mixing_gap`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub kind: BoundKind,
    pub stability: f64,
    /// `2·rad`, or `2τ·rad(τ)` for the mini-batch bound.
    pub rademacher: f64,
    /// `2λ·sup Ω`.
    pub regularization: f64,
    pub mixing_gap: f64,
    /// Chosen block length of the mini-batch bound.
    pub tau: Option<usize>,
    /// Objective per grid value, mini-batch bound only.
    pub objectives: Vec<(usize, f64)>,
    pub total: f64,
}

fn nonnegative(name: &'static str, value: f64) -> Result<f64, ComplexityError> {
    if value >= 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(ComplexityError::Negative { name, value })
    }
}

fn assemble(
    kind: BoundKind,
    stability: f64,
    rademacher: f64,
    regularization: f64,
    mixing_gap: f64,
    tau: Option<usize>,
    objectives: Vec<(usize, f64)>,
) -> BoundReport {
    let total = stability + rademacher + regularization + mixing_gap;
    BoundReport { kind, stability, rademacher, regularization, mixing_gap, tau, objectives, total }
}

/// `Σβ + 2·rad + 2λ·sup Ω`.
pub fn bound_main(stability_sum: f64, rad: f64, lambda: f64, sup_omega: f64) -> Result<BoundReport, ComplexityError> {
    let s = nonnegative("stability sum", stability_sum)?;
    let r = nonnegative("rademacher", rad)?;
    let l = nonnegative("lambda", lambda)?;
    let o = nonnegative("sup omega", sup_omega)?;
    Ok(assemble(BoundKind::Main, s, 2.0 * r, 2.0 * l * o, 0.0, None, Vec::new()))
}

/// `min_τ Σβ(τ) + 2τ·rad(τ)`; ties go to the smallest `τ`.
///
/// `stability[i]` and `rad_per_batch[i]` belong to `taus[i]`.
pub fn bound_minibatch(
    stability: &[f64],
    rad_per_batch: &[f64],
    taus: &[usize],
) -> Result<BoundReport, ComplexityError> {
    if taus.is_empty() {
        return Err(ComplexityError::EmptyGrid);
    }
    if stability.len() != taus.len() || rad_per_batch.len() != taus.len() {
        return Err(ComplexityError::Input("profiles must match the τ grid in length".into()));
    }
    if taus.contains(&0) {
        return Err(ComplexityError::Input("block lengths must be positive".into()));
    }
    let mut objectives = Vec::with_capacity(taus.len());
    let mut best: Option<(usize, f64, f64, f64)> = None;
    for ((&tau, &b), &r) in taus.iter().zip(stability).zip(rad_per_batch) {
        let b = nonnegative("stability sum", b)?;
        let r = 2.0 * tau as f64 * nonnegative("rademacher", r)?;
        let obj = b + r;
        objectives.push((tau, obj));
        let better = match best {
            None => true,
            Some((bt, bo, _, _)) => obj < bo || (obj == bo && tau < bt),
        };
        if better {
            best = Some((tau, obj, b, r));
        }
    }
    let (tau, _, b, r) = best.expect("nonempty grid");
    Ok(assemble(BoundKind::Minibatch, b, r, 0.0, 0.0, Some(tau), objectives))
}

/// `Σβ* + 2·rad + 2λ·sup Ω + mixing gap`.
pub fn bound_ergodic(
    stability_sum: f64,
    rad: f64,
    lambda: f64,
    sup_omega: f64,
    mixing_gap_sum: f64,
) -> Result<BoundReport, ComplexityError> {
    let main = bound_main(stability_sum, rad, lambda, sup_omega)?;
    let m = nonnegative("mixing gap", mixing_gap_sum)?;
    Ok(assemble(BoundKind::Ergodic, main.stability, main.rademacher, main.regularization, m, None, Vec::new()))
}

/// `|ℓ^Φ_t(π) − ℓ*(π, z_t)|` for `t = 1..=zs.len()`.
pub fn mixing_gap_profile<E: Environment>(
    env: &E,
    policy: &E::Policy,
    zs: &[E::LossInstance],
    zetas: &[E::DynInstance],
    cfg: &RolloutConfig,
) -> Result<Vec<f64>, ComplexityError> {
    let counterfactual = counterfactual_losses(env, policy, zetas, zs, cfg)?;
    counterfactual
        .iter()
        .zip(zs)
        .map(|(c, z)| Ok((c - env.stationary_loss(policy, z)?).abs()))
        .collect()
}
