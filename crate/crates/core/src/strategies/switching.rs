use rand::RngCore;

use crate::discrete::LinLowerBoundEnv;
use crate::game::{Adversary, DeclaredAction, StrategyError};
use crate::linalg::{dot, norm2};

/// Residuals below this are treated as zero during orthogonalization.
const GS_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SwitchEvent {
    First,
    /// `t` is a multiple of the block length.
    Scheduled,
    /// Learner movement since the last switch exceeded `1/L`.
    Deviation,
}

/// Unit vector orthogonal to every vector in `against`: the normalized
/// residual of the first canonical direction with a nonzero residual, signed
/// so its first nonzero coordinate is positive.
pub fn orthogonal_unit_vector(against: &[&[f64]], dim: usize) -> Option<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for v in against {
        let scale = 1.0 + norm2(v);
        if let Some(q) = residual(v, &basis, scale) {
            basis.push(q);
        }
    }
    for i in 0..dim {
        let mut e = vec![0.0; dim];
        e[i] = 1.0;
        if let Some(mut z) = residual(&e, &basis, 1.0) {
            if let Some(first) = z.iter().find(|c| c.abs() > 1e-12).copied() {
                if first < 0.0 {
                    z.iter_mut().for_each(|c| *c = -*c);
                }
            }
            return Some(z);
        }
    }
    None
}

/// Normalized component of `v` orthogonal to `basis`, twice projected.
fn residual(v: &[f64], basis: &[Vec<f64>], scale: f64) -> Option<Vec<f64>> {
    let mut r = v.to_vec();
    for _ in 0..2 {
        for q in basis {
            let c = dot(&r, q);
            r.iter_mut().zip(q).for_each(|(a, b)| *a -= c * b);
        }
    }
    let n = norm2(&r);
    if n > GS_TOL * scale {
        Some(r.iter().map(|a| a / n).collect())
    } else {
        None
    }
}

/// Holds a unit instance and switches to a fresh one orthogonal to the
/// running instance sum and to the learner's (mean) action when round `t`
/// is a multiple of the block length, or when the learner's movement
/// `Σ_{s=t₀+1}^{t} ‖f_s − f_{s−1}‖` since the last switch `t₀` exceeds `1/L`.
#[derive(Debug, Clone)]
pub struct SwitchingAdversary {
    lipschitz: f64,
    block: usize,
    current: Vec<f64>,
    sum: Vec<f64>,
    previous_mean: Option<Vec<f64>>,
    deviation: f64,
    events: Vec<(usize, SwitchEvent)>,
}

impl SwitchingAdversary {
    pub fn new(lipschitz: f64, block: usize) -> Result<Self, StrategyError> {
        if !(lipschitz > 0.0 && lipschitz.is_finite()) || block == 0 {
            return Err(StrategyError::Invalid("need L > 0 and a positive block length".into()));
        }
        Ok(SwitchingAdversary {
            lipschitz,
            block,
            current: Vec::new(),
            sum: Vec::new(),
            previous_mean: None,
            deviation: 0.0,
            events: Vec::new(),
        })
    }

    /// Switch rounds and their causes.
    pub fn events(&self) -> &[(usize, SwitchEvent)] {
        &self.events
    }

    /// `Z_{t−1}` after the last observed round.
    pub fn instance_sum(&self) -> &[f64] {
        &self.sum
    }
}

impl Adversary<LinLowerBoundEnv> for SwitchingAdversary {
    fn id(&self) -> String {
        format!("switching(L={},block={})", self.lipschitz, self.block)
    }

    fn needs_declared_action(&self) -> bool {
        true
    }

    fn emit(
        &mut self,
        env: &LinLowerBoundEnv,
        t: usize,
        declared: Option<&DeclaredAction<Vec<f64>>>,
        _: &mut dyn RngCore,
    ) -> Result<(Vec<f64>, ()), StrategyError> {
        let mean = match declared {
            Some(DeclaredAction::Deterministic(f)) => f.clone(),
            Some(DeclaredAction::MixtureMean { mean, .. }) => mean.clone(),
            None => return Err(StrategyError::Invalid("switching adversary needs the declared action".into())),
        };
        if mean.len() != env.dim {
            return Err(StrategyError::Invalid(format!("declared mean has length {}", mean.len())));
        }
        if self.sum.is_empty() {
            self.sum = vec![0.0; env.dim];
        }
        let event = if t == 1 {
            Some(SwitchEvent::First)
        } else {
            if let Some(prev) = &self.previous_mean {
                let step: f64 = norm2(&mean.iter().zip(prev).map(|(a, b)| a - b).collect::<Vec<_>>());
                self.deviation += step;
            }
            if t % self.block == 0 {
                Some(SwitchEvent::Scheduled)
            } else if self.deviation > 1.0 / self.lipschitz {
                Some(SwitchEvent::Deviation)
            } else {
                None
            }
        };
        if let Some(ev) = event {
            self.current = orthogonal_unit_vector(&[&self.sum, &mean], env.dim)
                .ok_or_else(|| StrategyError::Invalid("constraints span the whole space".into()))?;
            self.deviation = 0.0;
            self.events.push((t, ev));
        }
        self.previous_mean = Some(mean);
        Ok((self.current.clone(), ()))
    }

    fn observe(&mut self, _: &LinLowerBoundEnv, _: usize, _: &Vec<f64>, z: &Vec<f64>, _: &()) {
        for (s, v) in self.sum.iter_mut().zip(z) {
            *s += v;
        }
    }
}
