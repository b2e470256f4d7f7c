use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::tree::{RademacherTree, Sign};
use super::ComplexityError;
use crate::game::Environment;
use crate::linalg::norm2;
use crate::rng::{stream, Purpose};
use crate::rollout::{counterfactual_losses, RolloutConfig};

/// Work limit `|Z|^{2^T−1} · 2^T · |Π|` of the exhaustive estimator.
pub const EXHAUSTIVE_BUDGET: f64 = 1e7;

#[derive(Debug, Clone, PartialEq)]
pub struct ExhaustiveValue {
    pub value: f64,
    /// `|Z|^{2^T−1}`.
    pub trees: f64,
    /// `|Z|^{2^T−1} · 2^T · |Π|`.
    pub work: f64,
    /// Leaf evaluations actually performed by the recursion.
    pub leaves: u64,
}

/// `sup_π Σ_t ε_t ℓ^Φ_t(π)` along a tree path for a finite class.
pub fn finite_class_sup<'a, E: Environment>(
    env: &'a E,
    policies: &'a [E::Policy],
    cfg: RolloutConfig,
) -> impl Fn(&[(E::LossInstance, E::DynInstance)], &[Sign]) -> Result<f64, ComplexityError> + 'a {
    move |path, signs| {
        if policies.is_empty() {
            return Err(ComplexityError::Input("policy class is empty".into()));
        }
        let zs: Vec<E::LossInstance> = path.iter().map(|n| n.0.clone()).collect();
        let zetas: Vec<E::DynInstance> = path.iter().take(path.len().saturating_sub(1)).map(|n| n.1.clone()).collect();
        let mut best = f64::NEG_INFINITY;
        for p in policies {
            let losses = counterfactual_losses(env, p, &zetas, &zs, &cfg)?;
            let v = losses.iter().zip(signs).fold(0.0, |acc, (l, s)| acc + f64::from(*s) * l);
            best = best.max(v);
        }
        Ok(best)
    }
}

/// `sup_{‖f‖≤1} ⟨f, Σ_t ε_t z_t⟩ = ‖Σ_t ε_t z_t‖₂` for linear losses.
pub fn linear_ball_sup<Zeta>(path: &[(Vec<f64>, Zeta)], signs: &[Sign]) -> Result<f64, ComplexityError> {
    let dim = path.first().map_or(0, |n| n.0.len());
    let mut sum = vec![0.0; dim];
    for ((z, _), s) in path.iter().zip(signs) {
        for (a, v) in sum.iter_mut().zip(z) {
            *a += f64::from(*s) * v;
        }
    }
    Ok(norm2(&sum))
}

/// Sequential Rademacher complexity of the unit-ball linear class over
/// unit-ball instances, `√n`, attained by trees whose node is orthogonal to
/// the signed sum along its prefix.
pub fn unit_ball_rademacher(n: usize) -> f64 {
    (n as f64).sqrt()
}

/// Exact `sup_tree E_ε sup_π Σ_t ε_t ℓ^Φ_t(π)` for a finite class.
pub fn seq_rademacher_exhaustive<E: Environment>(
    env: &E,
    policies: &[E::Policy],
    instances: &[(E::LossInstance, E::DynInstance)],
    depth: usize,
    cfg: &RolloutConfig,
) -> Result<ExhaustiveValue, ComplexityError> {
    seq_rademacher_exhaustive_with(finite_class_sup(env, policies, *cfg), instances, depth, policies.len())
}

/// Exhaustive value with a caller-supplied path supremum over a class of
/// `class_size` policies.
///
/// Node choices at distinct prefixes are independent, so the supremum over
/// trees is the backward recursion `W(h) = max_z ½(W(h, z, −1) + W(h, z, +1))`
/// whose leaves are path suprema.
pub fn seq_rademacher_exhaustive_with<Z: Clone, Zeta: Clone>(
    sup: impl Fn(&[(Z, Zeta)], &[Sign]) -> Result<f64, ComplexityError>,
    instances: &[(Z, Zeta)],
    depth: usize,
    class_size: usize,
) -> Result<ExhaustiveValue, ComplexityError> {
    if depth == 0 || instances.is_empty() || class_size == 0 {
        return Err(ComplexityError::Input("depth, instance set and class must be nonempty".into()));
    }
    let nodes = 2f64.powi(depth.min(1000) as i32) - 1.0;
    let trees = (instances.len() as f64).powf(nodes);
    let work = trees * 2f64.powi(depth as i32) * class_size as f64;
    if !(work <= EXHAUSTIVE_BUDGET) {
        return Err(ComplexityError::Budget { required: work, limit: EXHAUSTIVE_BUDGET });
    }
    let mut path = Vec::with_capacity(depth);
    let mut signs = Vec::with_capacity(depth);
    let mut leaves = 0;
    let value = recurse(&sup, instances, depth, &mut path, &mut signs, &mut leaves)?;
    Ok(ExhaustiveValue { value, trees, work, leaves })
}

fn recurse<Z: Clone, Zeta: Clone>(
    sup: &impl Fn(&[(Z, Zeta)], &[Sign]) -> Result<f64, ComplexityError>,
    instances: &[(Z, Zeta)],
    depth: usize,
    path: &mut Vec<(Z, Zeta)>,
    signs: &mut Vec<Sign>,
    leaves: &mut u64,
) -> Result<f64, ComplexityError> {
    if path.len() == depth {
        *leaves += 1;
        return sup(path, signs);
    }
    let mut best = f64::NEG_INFINITY;
    for inst in instances {
        path.push(inst.clone());
        let mut halves = [0.0; 2];
        for (h, s) in halves.iter_mut().zip([-1, 1]) {
            signs.push(s);
            *h = recurse(sup, instances, depth, path, signs, leaves)?;
            signs.pop();
        }
        path.pop();
        best = best.max(0.5 * (halves[0] + halves[1]));
    }
    Ok(best)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McConfig {
    /// Sampled trees; the best one on the selection signs is kept.
    pub trees: usize,
    /// Sign paths per expectation, for selection and again for evaluation.
    pub signs: usize,
    pub seed: u64,
    /// One coordinate-improvement pass over explicit trees.
    pub greedy: bool,
    /// Normal quantile of the reported interval.
    pub z_score: f64,
}

impl Default for McConfig {
    fn default() -> Self {
        McConfig { trees: 32, signs: 2000, seed: 0, greedy: true, z_score: 2.576 }
    }
}

/// Monte Carlo estimate of the sequential Rademacher complexity.
///
/// A lower estimate of the true supremum: trees are searched, not
/// enumerated. The interval covers `E_ε sup_π …` for the selected tree and
/// is computed from sign paths independent of those used for selection.
#[derive(Debug, Clone, PartialEq)]
pub struct McEstimate {
    pub value: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub std_error: f64,
    /// Estimate of the selected tree on the selection signs.
    pub selection_value: f64,
    pub best_tree: usize,
    pub greedy_moves: usize,
    pub signs: usize,
}

/// Distinct sign paths with multiplicities, in lexicographic order.
struct SignSample {
    patterns: BTreeMap<Vec<Sign>, usize>,
    total: usize,
}

impl SignSample {
    fn draw(rng: &mut ChaCha8Rng, n: usize, depth: usize) -> Self {
        let mut patterns = BTreeMap::new();
        for _ in 0..n {
            let row: Vec<Sign> = (0..depth).map(|_| if rng.gen::<bool>() { 1 } else { -1 }).collect();
            *patterns.entry(row).or_insert(0) += 1;
        }
        SignSample { patterns, total: n }
    }

    /// Sample mean and sample variance of the path supremum.
    fn evaluate<Z: Clone, Zeta: Clone>(
        &self,
        tree: &RademacherTree<Z, Zeta>,
        sup: &impl Fn(&[(Z, Zeta)], &[Sign]) -> Result<f64, ComplexityError>,
    ) -> Result<(f64, f64), ComplexityError> {
        let mut values = Vec::with_capacity(self.patterns.len());
        for (signs, count) in &self.patterns {
            values.push((sup(&tree.path(signs)?, signs)?, *count as f64));
        }
        let n = self.total as f64;
        let mean = values.iter().fold(0.0, |a, (v, c)| a + v * c) / n;
        let var = if self.total > 1 {
            values.iter().fold(0.0, |a, (v, c)| a + c * (v - mean) * (v - mean)) / (n - 1.0)
        } else {
            0.0
        };
        Ok((mean, var))
    }
}

/// Estimates `sup_tree E_ε sup_π Σ_t ε_t ℓ^Φ_t(π)` at depth `depth`.
///
/// `sample_tree(i, rng)` draws tree `i`. When `candidates` is given, one
/// greedy pass replaces each explicit node in heap order by the candidate
/// that most increases the selection estimate.
pub fn seq_rademacher_mc<Z: Clone, Zeta: Clone>(
    sup: impl Fn(&[(Z, Zeta)], &[Sign]) -> Result<f64, ComplexityError>,
    mut sample_tree: impl FnMut(usize, &mut ChaCha8Rng) -> Result<RademacherTree<Z, Zeta>, ComplexityError>,
    candidates: Option<&[(Z, Zeta)]>,
    depth: usize,
    cfg: &McConfig,
) -> Result<(McEstimate, RademacherTree<Z, Zeta>), ComplexityError> {
    if cfg.trees == 0 || cfg.signs == 0 || depth == 0 {
        return Err(ComplexityError::Input("trees, signs and depth must be positive".into()));
    }
    let selection = SignSample::draw(&mut stream(cfg.seed, 0, 0, Purpose::Signs), cfg.signs, depth);
    let mut best: Option<(f64, usize, RademacherTree<Z, Zeta>)> = None;
    for i in 0..cfg.trees {
        let tree = sample_tree(i, &mut stream(cfg.seed, i as u64, 0, Purpose::Tree))?;
        if tree.depth() < depth {
            return Err(ComplexityError::Input(format!("sampled tree depth {} < {depth}", tree.depth())));
        }
        let (mean, _) = selection.evaluate(&tree, &sup)?;
        if best.as_ref().map_or(true, |b| mean > b.0) {
            best = Some((mean, i, tree));
        }
    }
    let (mut selection_value, best_tree, mut tree) = best.expect("at least one tree");
    let mut greedy_moves = 0;
    if let (true, Some(cands)) = (cfg.greedy, candidates) {
        if tree.is_explicit() {
            let count = (1usize << depth) - 1;
            for index in 0..count {
                let original = tree.explicit_nodes().expect("explicit")[index].clone();
                let mut keep = original.clone();
                let mut moved = false;
                for c in cands {
                    tree.set_node(index, c.clone())?;
                    let (mean, _) = selection.evaluate(&tree, &sup)?;
                    if mean > selection_value {
                        selection_value = mean;
                        keep = c.clone();
                        moved = true;
                    }
                }
                tree.set_node(index, keep)?;
                greedy_moves += usize::from(moved);
            }
        }
    }
    let fresh = SignSample::draw(&mut stream(cfg.seed, 1, 0, Purpose::Signs), cfg.signs, depth);
    let (value, var) = fresh.evaluate(&tree, &sup)?;
    let std_error = (var / cfg.signs as f64).sqrt();
    let half = cfg.z_score * std_error;
    Ok((
        McEstimate {
            value,
            ci_low: value - half,
            ci_high: value + half,
            std_error,
            selection_value,
            best_tree,
            greedy_moves,
            signs: cfg.signs,
        },
        tree,
    ))
}
