use super::ComplexityError;
use crate::game::{CapabilityError, Environment};

/// Work limit `|Π| · (|Z|·|Π|)^T` of the pure-strategy oracle.
pub const ORACLE_BUDGET: f64 = 1e7;
/// Largest class or instance set of the single-round mixed solve.
pub const MIXED_SIZE_CAP: usize = 8;
/// Fictitious-play iterations before giving up on the target gap.
pub const FICTITIOUS_PLAY_CAP: u64 = 10_000_000;
const MIXED_GAP: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct OracleValue {
    /// `min` over deterministic learner strategies of the worst-case regret.
    pub value: f64,
    /// `|Π| · (|Z|·|Π|)^T`.
    pub work: f64,
    pub leaves: u64,
    /// Index of an optimal round-1 policy (lowest on ties).
    pub first_policy: usize,
}

fn require_exact<E: Environment>(env: &E) -> Result<(), ComplexityError> {
    if env.has_exact_law() && env.is_deterministic() {
        Ok(())
    } else {
        Err(CapabilityError::Unsupported(format!("{} is not deterministic with an exact law", env.name())).into())
    }
}

/// Pure-strategy minimax policy regret of a finite deterministic game.
///
/// Computes `min_{π_1} max_{z_1} … min_{π_T} max_{z_T} (Σ_t ℓ_t − min_π Σ_t ℓ^Φ_t(π))`,
/// which equals the minimum over history-dependent deterministic learners of
/// their worst-case regret. It upper-bounds the value over mixed learners.
pub fn pure_minimax_oracle<E: Environment>(
    env: &E,
    policies: &[E::Policy],
    instances: &[(E::LossInstance, E::DynInstance)],
    horizon: usize,
) -> Result<OracleValue, ComplexityError> {
    require_exact(env)?;
    if horizon == 0 || policies.is_empty() || instances.is_empty() {
        return Err(ComplexityError::Input("horizon, class and instance set must be nonempty".into()));
    }
    let p = policies.len() as f64;
    let work = p * (instances.len() as f64 * p).powi(horizon.min(1000) as i32);
    if !(work <= ORACLE_BUDGET) {
        return Err(ComplexityError::Budget { required: work, limit: ORACLE_BUDGET });
    }
    let init = env.initial_law();
    let comparators: Vec<(E::Law, f64)> = policies.iter().map(|_| (init.clone(), 0.0)).collect();
    let mut search = Search { env, policies, instances, horizon, leaves: 0 };
    let (value, first_policy) = search.learner_node(1, &init, 0.0, &comparators);
    Ok(OracleValue { value, work, leaves: search.leaves, first_policy })
}

struct Search<'a, E: Environment> {
    env: &'a E,
    policies: &'a [E::Policy],
    instances: &'a [(E::LossInstance, E::DynInstance)],
    horizon: usize,
    leaves: u64,
}

impl<E: Environment> Search<'_, E> {
    /// Value and minimizing policy index at round `t`.
    fn learner_node(&mut self, t: usize, law: &E::Law, cum: f64, comparators: &[(E::Law, f64)]) -> (f64, usize) {
        if t > self.horizon {
            self.leaves += 1;
            let best = comparators.iter().fold(f64::INFINITY, |m, c| m.min(c.1));
            return (cum - best, 0);
        }
        let advanced: Vec<Vec<(E::Law, f64)>> = self
            .instances
            .iter()
            .map(|(z, zeta)| {
                comparators
                    .iter()
                    .zip(self.policies)
                    .map(|((cl, cc), p)| (self.env.law_step(cl, p, zeta), cc + self.env.law_loss(p, cl, z)))
                    .collect()
            })
            .collect();
        let mut best = (f64::INFINITY, 0);
        for (i, p) in self.policies.iter().enumerate() {
            let mut worst = f64::NEG_INFINITY;
            for ((z, zeta), comp) in self.instances.iter().zip(&advanced) {
                let next = self.env.law_step(law, p, zeta);
                let loss = self.env.law_loss(p, law, z);
                let (v, _) = self.learner_node(t + 1, &next, cum + loss, comp);
                worst = worst.max(v);
            }
            if worst < best.0 {
                best = (worst, i);
            }
        }
        best
    }
}

/// Mixed-strategy value of the single-round game.
#[derive(Debug, Clone, PartialEq)]
pub struct MixedValue {
    /// Midpoint of the certified interval `[lower, upper]`.
    pub value: f64,
    pub lower: f64,
    pub upper: f64,
    pub iterations: u64,
    pub converged: bool,
}

/// `min_q max_z E_{π∼q}[ℓ(π, x_1, z) − min_π' ℓ(π', x_1, z)]` by fictitious
/// play, stopping at a duality gap of `1e-6`.
pub fn mixed_value_single_round<E: Environment>(
    env: &E,
    policies: &[E::Policy],
    instances: &[E::LossInstance],
) -> Result<MixedValue, ComplexityError> {
    require_exact(env)?;
    if policies.is_empty() || instances.is_empty() {
        return Err(ComplexityError::Input("class and instance set must be nonempty".into()));
    }
    if policies.len() > MIXED_SIZE_CAP || instances.len() > MIXED_SIZE_CAP {
        return Err(ComplexityError::Budget {
            required: policies.len().max(instances.len()) as f64,
            limit: MIXED_SIZE_CAP as f64,
        });
    }
    let init = env.initial_law();
    let raw: Vec<Vec<f64>> =
        policies.iter().map(|p| instances.iter().map(|z| env.law_loss(p, &init, z)).collect()).collect();
    let regret: Vec<Vec<f64>> = raw
        .iter()
        .map(|row| {
            row.iter()
                .enumerate()
                .map(|(j, v)| v - raw.iter().fold(f64::INFINITY, |m, r| m.min(r[j])))
                .collect()
        })
        .collect();
    Ok(fictitious_play(&regret, MIXED_GAP, FICTITIOUS_PLAY_CAP))
}

/// Row player minimizes `m`, column player maximizes.
fn fictitious_play(m: &[Vec<f64>], gap: f64, cap: u64) -> MixedValue {
    let rows = m.len();
    let cols = m[0].len();
    // row_payoff[i] = Σ_j colcount_j m[i][j]; col_payoff[j] = Σ_i rowcount_i m[i][j]
    let mut row_payoff = vec![0.0; rows];
    let mut col_payoff = vec![0.0; cols];
    let mut i = 0;
    let mut lower = f64::NEG_INFINITY;
    let mut upper = f64::INFINITY;
    for n in 1..=cap {
        for (c, v) in col_payoff.iter_mut().zip(&m[i]) {
            *c += v;
        }
        let j = argmax(&col_payoff);
        for (r, row) in row_payoff.iter_mut().zip(m) {
            *r += row[j];
        }
        let nf = n as f64;
        upper = upper.min(col_payoff[j] / nf);
        i = argmin(&row_payoff);
        lower = lower.max(row_payoff[i] / nf);
        if upper - lower <= gap {
            return MixedValue { value: 0.5 * (lower + upper), lower, upper, iterations: n, converged: true };
        }
    }
    MixedValue { value: 0.5 * (lower + upper), lower, upper, iterations: cap, converged: false }
}

fn argmax(v: &[f64]) -> usize {
    (1..v.len()).fold(0, |b, k| if v[k] > v[b] { k } else { b })
}

fn argmin(v: &[f64]) -> usize {
    (1..v.len()).fold(0, |b, k| if v[k] < v[b] { k } else { b })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discrete::TabularGame;

    fn units(n: usize) -> Vec<(usize, ())> {
        (0..n).map(|i| (i, ())).collect()
    }

    #[test]
    fn matching_pennies_single_round() {
        let g = TabularGame::stateless(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let v = pure_minimax_oracle(&g, &[0, 1], &units(2), 1).unwrap();
        assert_eq!(v.value, 1.0);
        let mixed = mixed_value_single_round(&g, &[0, 1], &[0, 1]).unwrap();
        assert!(mixed.converged);
        assert!((mixed.value - 0.5).abs() < 1e-6);
    }

    #[test]
    fn single_instance_is_zero() {
        let g = TabularGame::stateless(&[vec![0.4], vec![0.1], vec![0.7]]).unwrap();
        assert_eq!(pure_minimax_oracle(&g, &[0, 1, 2], &units(1), 3).unwrap().value, 0.0);
    }

    #[test]
    fn budget_is_enforced() {
        let g = TabularGame::stateless(&vec![vec![0.0; 3]; 3]).unwrap();
        assert!(matches!(
            pure_minimax_oracle(&g, &[0, 1, 2], &units(3), 8),
            Err(ComplexityError::Budget { .. })
        ));
    }
}
