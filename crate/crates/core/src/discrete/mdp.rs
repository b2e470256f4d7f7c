//! Online Markov decision processes with known transitions and adversarial
//! losses `z ∈ [0,1]^{S×A}`.
//!
//! Policies are stationary and possibly randomized. The charged loss at a
//! state is the expectation over the policy's action draw, so the
//! realized-loss channel carries no action noise; the transition noise is
//! drawn in [`Environment::step`].

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::game::{CapabilityError, Environment};
use crate::linalg::Matrix;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MdpError {
    #[error("invalid MDP: {0}")]
    Invalid(String),
    #[error("malformed policy: {0}")]
    Policy(String),
    #[error("chain is not unichain: {0} closed classes")]
    NotUnichain(usize),
    #[error("stationary distribution did not converge within {0} iterations")]
    NoConvergence(usize),
    #[error("{count} deterministic policies exceed the enumeration cap {cap}")]
    EnumerationCap { count: u128, cap: usize },
    #[error("declared contraction e^(-1/τ) = {declared} is below the kernel's coefficient {actual}")]
    Contraction { declared: f64, actual: f64 },
}

/// Maximum number of deterministic policies enumerated.
pub const DETERMINISTIC_POLICY_CAP: usize = 4096;

const STATIONARY_ITERATION_CAP: usize = 10_000_000;

#[derive(Debug, Clone)]
pub struct MdpSystem {
    states: usize,
    actions: usize,
    /// `kernel[(x·A + u)·S + x']`.
    kernel: Vec<f64>,
    start: Vec<f64>,
    /// Declared mixing time `τ ≥ 1`.
    pub tau: f64,
}

/// Randomized stationary policy `π(x, u)`, row-major `S × A`.
#[derive(Debug, Clone, PartialEq)]
pub struct MdpPolicy {
    pub probs: Vec<f64>,
}

impl MdpPolicy {
    pub fn deterministic(actions_per_state: &[usize], actions: usize) -> Self {
        let mut probs = vec![0.0; actions_per_state.len() * actions];
        for (x, &u) in actions_per_state.iter().enumerate() {
            probs[x * actions + u] = 1.0;
        }
        MdpPolicy { probs }
    }

    pub fn uniform(states: usize, actions: usize) -> Self {
        MdpPolicy { probs: vec![1.0 / actions as f64; states * actions] }
    }
}

fn check_distribution(row: &[f64], what: &str) -> Result<(), String> {
    if row.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
        return Err(format!("{what} has negative or non-finite entries"));
    }
    let s: f64 = row.iter().sum();
    if (s - 1.0).abs() > 1e-12 {
        return Err(format!("{what} sums to {s}"));
    }
    Ok(())
}

impl MdpSystem {
    /// Validates the kernel and the declared `τ` against the exact
    /// contraction coefficient of the kernel.
    pub fn new(states: usize, actions: usize, kernel: Vec<f64>, start: Vec<f64>, tau: f64) -> Result<Self, MdpError> {
        if states == 0 || actions == 0 {
            return Err(MdpError::Invalid("need S, A ≥ 1".into()));
        }
        if kernel.len() != states * actions * states {
            return Err(MdpError::Invalid(format!("kernel has {} entries, expected {}", kernel.len(), states * actions * states)));
        }
        for row in 0..states * actions {
            check_distribution(&kernel[row * states..(row + 1) * states], &format!("P(x={}, u={})", row / actions, row % actions))
                .map_err(MdpError::Invalid)?;
        }
        if start.len() != states {
            return Err(MdpError::Invalid(format!("start has {} entries, expected {states}", start.len())));
        }
        check_distribution(&start, "start distribution").map_err(MdpError::Invalid)?;
        if !(tau >= 1.0) {
            return Err(MdpError::Invalid(format!("need τ ≥ 1, got {tau}")));
        }
        let system = MdpSystem { states, actions, kernel, start, tau };
        let actual = system.contraction_coefficient();
        let declared = (-1.0 / tau).exp();
        if actual > declared + 1e-12 {
            return Err(MdpError::Contraction { declared, actual });
        }
        Ok(system)
    }

    /// Mixes every row with the uniform distribution, `P ← (1−α)P + α/S`,
    /// and declares `τ = max(1, −1/ln(1−α))`.
    pub fn smoothed(states: usize, actions: usize, kernel: Vec<f64>, start: Vec<f64>, alpha: f64) -> Result<Self, MdpError> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(MdpError::Invalid(format!("smoothing must lie in (0, 1], got {alpha}")));
        }
        let u = 1.0 / states as f64;
        let mixed: Vec<f64> = kernel.iter().map(|p| (1.0 - alpha) * p + alpha * u).collect();
        let tau = if alpha >= 1.0 { 1.0 } else { (-1.0 / (1.0 - alpha).ln()).max(1.0) };
        Self::new(states, actions, mixed, start, tau)
    }

    /// Smoothed kernel with rows drawn uniformly from the simplex.
    pub fn random_smoothed(states: usize, actions: usize, alpha: f64, rng: &mut dyn RngCore) -> Result<Self, MdpError> {
        let mut kernel = Vec::with_capacity(states * actions * states);
        for _ in 0..states * actions {
            kernel.extend(random_simplex(states, rng));
        }
        let mut start = vec![0.0; states];
        start[0] = 1.0;
        Self::smoothed(states, actions, kernel, start, alpha)
    }

    pub fn states(&self) -> usize {
        self.states
    }

    pub fn actions(&self) -> usize {
        self.actions
    }

    pub fn start(&self) -> &[f64] {
        &self.start
    }

    pub fn with_start(mut self, start: Vec<f64>) -> Result<Self, MdpError> {
        if start.len() != self.states {
            return Err(MdpError::Invalid("start distribution has the wrong length".into()));
        }
        check_distribution(&start, "start distribution").map_err(MdpError::Invalid)?;
        self.start = start;
        Ok(self)
    }

    pub fn transition(&self, x: usize, u: usize) -> &[f64] {
        let row = x * self.actions + u;
        &self.kernel[row * self.states..(row + 1) * self.states]
    }

    /// `½ max ‖P(x,u) − P(x',v)‖₁` over `x ≠ x'`; bounds the `ℓ₁`
    /// contraction of `d ↦ dP^π` for every randomized `π`.
    pub fn contraction_coefficient(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for x in 0..self.states {
            for xp in (x + 1)..self.states {
                for u in 0..self.actions {
                    for v in 0..self.actions {
                        let tv: f64 =
                            self.transition(x, u).iter().zip(self.transition(xp, v)).map(|(a, b)| (a - b).abs()).sum();
                        worst = worst.max(0.5 * tv);
                    }
                }
            }
        }
        worst
    }

    pub fn check_policy(&self, pi: &MdpPolicy) -> Result<(), MdpError> {
        if pi.probs.len() != self.states * self.actions {
            return Err(MdpError::Policy(format!("{} entries, expected {}", pi.probs.len(), self.states * self.actions)));
        }
        for x in 0..self.states {
            check_distribution(&pi.probs[x * self.actions..(x + 1) * self.actions], &format!("π(x={x})"))
                .map_err(MdpError::Policy)?;
        }
        Ok(())
    }

    /// `d P^π`.
    pub fn push_forward(&self, d: &[f64], pi: &MdpPolicy) -> Vec<f64> {
        let mut out = vec![0.0; self.states];
        for x in 0..self.states {
            if d[x] == 0.0 {
                continue;
            }
            for u in 0..self.actions {
                let w = d[x] * pi.probs[x * self.actions + u];
                if w == 0.0 {
                    continue;
                }
                for (o, p) in out.iter_mut().zip(self.transition(x, u)) {
                    *o += w * p;
                }
            }
        }
        out
    }

    /// `z̃_π(x) = Σ_u π(x,u) z(x,u)`.
    pub fn policy_loss_vector(&self, pi: &MdpPolicy, z: &[f64]) -> Vec<f64> {
        (0..self.states)
            .map(|x| (0..self.actions).map(|u| pi.probs[x * self.actions + u] * z[x * self.actions + u]).sum())
            .collect()
    }

    /// Checks `‖dP^π − d'P^π‖₁ ≤ e^{−1/τ}‖d − d'‖₁` on random triples and
    /// returns the largest observed ratio.
    pub fn spot_check_contraction(&self, samples: usize, rng: &mut dyn RngCore) -> f64 {
        let mut worst: f64 = 0.0;
        for _ in 0..samples {
            let mut probs = Vec::with_capacity(self.states * self.actions);
            for _ in 0..self.states {
                probs.extend(random_simplex(self.actions, rng));
            }
            let pi = MdpPolicy { probs };
            let d = random_simplex(self.states, rng);
            let dp = random_simplex(self.states, rng);
            let before: f64 = d.iter().zip(&dp).map(|(a, b)| (a - b).abs()).sum();
            if before == 0.0 {
                continue;
            }
            let a = self.push_forward(&d, &pi);
            let b = self.push_forward(&dp, &pi);
            let after: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum();
            worst = worst.max(after / before);
        }
        worst
    }
}

fn random_simplex(n: usize, rng: &mut dyn RngCore) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / s).collect()
}

/// `P^π(x, x') = Σ_u π(x,u) P(x'|x,u)`.
pub fn mdp_induced_transition(pi: &MdpPolicy, system: &MdpSystem) -> Result<Matrix, MdpError> {
    system.check_policy(pi)?;
    let s = system.states;
    Ok(Matrix::from_fn(s, s, |x, xp| {
        (0..system.actions).map(|u| pi.probs[x * system.actions + u] * system.transition(x, u)[xp]).sum()
    }))
}

/// Number of closed communicating classes of the positive-entry graph.
pub fn closed_class_count(p: &Matrix) -> usize {
    let n = p.rows();
    // reach[i][j]: j reachable from i
    let mut reach = vec![vec![false; n]; n];
    for (i, row) in reach.iter_mut().enumerate() {
        row[i] = true;
        let mut stack = vec![i];
        while let Some(a) = stack.pop() {
            for b in 0..n {
                if p[(a, b)] > 0.0 && !row[b] {
                    row[b] = true;
                    stack.push(b);
                }
            }
        }
    }
    let mut seen = vec![false; n];
    let mut closed = 0;
    for i in 0..n {
        if seen[i] {
            continue;
        }
        let class: Vec<usize> = (0..n).filter(|&j| reach[i][j] && reach[j][i]).collect();
        for &j in &class {
            seen[j] = true;
        }
        let is_closed = class.iter().all(|&a| (0..n).all(|b| !reach[a][b] || class.contains(&b)));
        if is_closed {
            closed += 1;
        }
    }
    closed
}

/// Stationary distribution of a unichain row-stochastic matrix by power
/// iteration of the lazy chain `(P + I)/2` from uniform.
pub fn mdp_stationary_distribution(p: &Matrix) -> Result<Vec<f64>, MdpError> {
    let n = p.rows();
    let classes = closed_class_count(p);
    if classes != 1 {
        return Err(MdpError::NotUnichain(classes));
    }
    let mut d = vec![1.0 / n as f64; n];
    for _ in 0..STATIONARY_ITERATION_CAP {
        let mut next = vec![0.0; n];
        for (x, dx) in d.iter().enumerate() {
            for (xp, nx) in next.iter_mut().enumerate() {
                *nx += dx * p[(x, xp)];
            }
        }
        let lazy: Vec<f64> = d.iter().zip(&next).map(|(a, b)| 0.5 * (a + b)).collect();
        let step: f64 = lazy.iter().zip(&d).map(|(a, b)| (a - b).abs()).sum();
        d = lazy;
        if step < 1e-12 {
            let s: f64 = d.iter().sum();
            d.iter_mut().for_each(|v| *v /= s);
            return Ok(d);
        }
    }
    Err(MdpError::NoConvergence(STATIONARY_ITERATION_CAP))
}

/// `E_{x∼d_π} Σ_u π(x,u) z(x,u)`.
pub fn mdp_stationary_loss(pi: &MdpPolicy, z: &[f64], system: &MdpSystem) -> Result<f64, MdpError> {
    let d = mdp_stationary_distribution(&mdp_induced_transition(pi, system)?)?;
    Ok(d.iter().zip(system.policy_loss_vector(pi, z)).map(|(a, b)| a * b).sum())
}

/// All `A^S` deterministic policies, last state's action varying fastest.
pub fn deterministic_policies(system: &MdpSystem) -> Result<Vec<MdpPolicy>, MdpError> {
    let count = (system.actions as u128).checked_pow(system.states as u32).unwrap_or(u128::MAX);
    if count > DETERMINISTIC_POLICY_CAP as u128 {
        return Err(MdpError::EnumerationCap { count, cap: DETERMINISTIC_POLICY_CAP });
    }
    let mut out = Vec::with_capacity(count as usize);
    let mut choice = vec![0usize; system.states];
    for _ in 0..count {
        out.push(MdpPolicy::deterministic(&choice, system.actions));
        for x in (0..system.states).rev() {
            choice[x] += 1;
            if choice[x] < system.actions {
                break;
            }
            choice[x] = 0;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct MdpEnv {
    pub system: MdpSystem,
}

impl MdpEnv {
    pub fn new(system: MdpSystem) -> Self {
        MdpEnv { system }
    }

    /// Fixed-seed spot check of the declared contraction.
    pub fn verify_contraction(&self) -> Result<(), MdpError> {
        let mut rng = ChaCha8Rng::seed_from_u64(0x6D64_7000);
        let ratio = self.system.spot_check_contraction(64, &mut rng);
        let declared = (-1.0 / self.system.tau).exp();
        if ratio > declared + 1e-12 {
            return Err(MdpError::Contraction { declared, actual: ratio });
        }
        Ok(())
    }
}

impl Environment for MdpEnv {
    type State = usize;
    type Policy = MdpPolicy;
    type LossInstance = Vec<f64>;
    type DynInstance = ();
    type Law = Vec<f64>;

    fn name(&self) -> String {
        format!("mdp(S={},A={})", self.system.states, self.system.actions)
    }

    fn initial_state(&self, rng: &mut dyn RngCore) -> usize {
        sample_index(&self.system.start, rng)
    }

    fn step(&self, x: &usize, pi: &MdpPolicy, _: &(), rng: &mut dyn RngCore) -> usize {
        let a = self.system.actions;
        let u = sample_index(&pi.probs[x * a..(x + 1) * a], rng);
        sample_index(self.system.transition(*x, u), rng)
    }

    fn loss(&self, pi: &MdpPolicy, x: &usize, z: &Vec<f64>) -> f64 {
        let a = self.system.actions;
        (0..a).map(|u| pi.probs[x * a + u] * z[x * a + u]).sum()
    }

    fn loss_bound(&self) -> f64 {
        1.0
    }

    fn is_deterministic(&self) -> bool {
        false
    }

    fn check_policy(&self, pi: &MdpPolicy) -> Result<(), String> {
        self.system.check_policy(pi).map_err(|e| e.to_string())
    }

    fn check_loss_instance(&self, z: &Vec<f64>) -> Result<(), String> {
        if z.len() != self.system.states * self.system.actions {
            return Err(format!("loss table has {} entries, expected {}", z.len(), self.system.states * self.system.actions));
        }
        if z.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err("loss entries must lie in [0, 1]".into());
        }
        Ok(())
    }

    fn check_dyn_instance(&self, _: &()) -> Result<(), String> {
        Ok(())
    }

    fn policy_label(&self, pi: &MdpPolicy) -> String {
        let entries: Vec<String> = pi.probs.iter().map(|v| format!("{v}")).collect();
        format!("pi[{}]", entries.join(";"))
    }

    fn has_exact_law(&self) -> bool {
        true
    }

    fn initial_law(&self) -> Vec<f64> {
        self.system.start.clone()
    }

    fn law_loss(&self, pi: &MdpPolicy, d: &Vec<f64>, z: &Vec<f64>) -> f64 {
        d.iter().zip(self.system.policy_loss_vector(pi, z)).map(|(a, b)| a * b).sum()
    }

    fn law_step(&self, d: &Vec<f64>, pi: &MdpPolicy, _: &()) -> Vec<f64> {
        self.system.push_forward(d, pi)
    }

    fn stationary_loss(&self, pi: &MdpPolicy, z: &Vec<f64>) -> Result<f64, CapabilityError> {
        mdp_stationary_loss(pi, z, &self.system).map_err(|e| CapabilityError::Unsupported(e.to_string()))
    }

    fn combine_instances(&self, a: &Vec<f64>, b: &Vec<f64>) -> Option<Vec<f64>> {
        Some(a.iter().zip(b).map(|(x, y)| x + y).collect())
    }
}

fn sample_index(p: &[f64], rng: &mut dyn RngCore) -> usize {
    let r: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, pi) in p.iter().enumerate() {
        acc += pi;
        if r < acc {
            return i;
        }
    }
    p.iter().rposition(|v| *v > 0.0).unwrap_or(p.len() - 1)
}
