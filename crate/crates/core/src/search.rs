//! Deterministic minimization over a policy class.
//!
//! Finite classes are enumerated. Boxed parametric classes are scanned on a
//! uniform grid (lexicographic order, last coordinate fastest) and the grid
//! winner is refined by stencils whose step halves each round. Ties go to
//! the lowest grid index, and during refinement to the lexicographically
//! smallest parameter vector.

use std::cmp::Ordering;
use std::sync::Arc;

use thiserror::Error;

use crate::game::Environment;

/// Default points per coordinate on the grid.
pub const DEFAULT_GRID_POINTS: usize = 17;
/// Default number of refinement rounds.
pub const DEFAULT_REFINE_ROUNDS: usize = 3;
/// Largest grid the search will build.
pub const MAX_GRID_CANDIDATES: usize = 2_000_000;
/// Stencils larger than this fall back to coordinate moves.
const MAX_FULL_STENCIL: usize = 729;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SearchError {
    #[error("policy class is empty")]
    EmptyClass,
    #[error("no feasible candidate on the grid")]
    NoFeasibleCandidate,
    #[error("grid of {0} candidates exceeds the limit {MAX_GRID_CANDIDATES}")]
    GridTooLarge(u128),
    #[error("invalid search configuration: {0}")]
    Config(String),
    #[error("objective evaluation failed: {0}")]
    Objective(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SearchConfig {
    pub grid_points: usize,
    pub refine_rounds: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig { grid_points: DEFAULT_GRID_POINTS, refine_rounds: DEFAULT_REFINE_ROUNDS }
    }
}

/// A policy family parameterized by a box in `ℝ^dim`.
pub trait ParamFamily<P>: Send + Sync {
    fn lower(&self) -> Vec<f64>;
    fn upper(&self) -> Vec<f64>;
    /// `None` when `theta` maps outside the feasible policy set.
    fn decode(&self, theta: &[f64]) -> Option<P>;
    /// Parameter vector of a policy, used for perturbations and means.
    fn encode(&self, policy: &P) -> Vec<f64>;
    fn dim(&self) -> usize {
        self.lower().len()
    }
}

/// Empirical risk minimizer supplied by an environment whose class cannot
/// be gridded.
pub trait ErmOracle<E: Environment>: Send + Sync {
    fn name(&self) -> String;
    /// Minimizer of the cumulative counterfactual loss over `zs`, `zetas`,
    /// and its objective value.
    fn minimize(
        &self,
        env: &E,
        zs: &[E::LossInstance],
        zetas: &[E::DynInstance],
    ) -> Result<(E::Policy, f64), SearchError>;
}

pub enum PolicyClass<E: Environment> {
    Finite(Vec<E::Policy>),
    Boxed(Arc<dyn ParamFamily<E::Policy>>),
    Oracle(Arc<dyn ErmOracle<E>>),
}

impl<E: Environment> Clone for PolicyClass<E> {
    fn clone(&self) -> Self {
        match self {
            PolicyClass::Finite(v) => PolicyClass::Finite(v.clone()),
            PolicyClass::Boxed(f) => PolicyClass::Boxed(Arc::clone(f)),
            PolicyClass::Oracle(o) => PolicyClass::Oracle(Arc::clone(o)),
        }
    }
}

impl<E: Environment> PolicyClass<E> {
    pub fn describe(&self) -> String {
        match self {
            PolicyClass::Finite(v) => format!("finite({})", v.len()),
            PolicyClass::Boxed(f) => format!("box(dim={})", f.dim()),
            PolicyClass::Oracle(o) => format!("oracle({})", o.name()),
        }
    }

    /// Parameter vector of a policy: one-hot index for finite classes.
    pub fn params_of(&self, policy: &E::Policy) -> Option<Vec<f64>> {
        match self {
            PolicyClass::Finite(v) => v.iter().position(|p| p == policy).map(|i| one_hot(v.len(), i)),
            PolicyClass::Boxed(f) => Some(f.encode(policy)),
            PolicyClass::Oracle(_) => None,
        }
    }
}

fn one_hot(n: usize, i: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    v[i] = 1.0;
    v
}

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate<P> {
    pub params: Vec<f64>,
    pub policy: P,
}

/// Decoded grid (or enumerated finite class).
#[derive(Debug, Clone)]
pub struct CandidateSet<P> {
    pub candidates: Vec<Candidate<P>>,
    /// Grid spacing per coordinate; empty for finite classes.
    pub step: Vec<f64>,
    pub grid_points: usize,
    /// Grid points rejected by `decode`.
    pub rejected: usize,
}

impl<P> CandidateSet<P> {
    pub fn policies(&self) -> impl ExactSizeIterator<Item = &P> {
        self.candidates.iter().map(|c| &c.policy)
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }
}

/// Enumerates a finite list as one-hot candidates.
pub fn finite_candidates<P: Clone>(policies: &[P]) -> Result<CandidateSet<P>, SearchError> {
    if policies.is_empty() {
        return Err(SearchError::EmptyClass);
    }
    let n = policies.len();
    Ok(CandidateSet {
        candidates: policies
            .iter()
            .enumerate()
            .map(|(i, p)| Candidate { params: one_hot(n, i), policy: p.clone() })
            .collect(),
        step: Vec::new(),
        grid_points: 0,
        rejected: 0,
    })
}

/// Decodes the uniform grid of a boxed family.
pub fn grid_candidates<P>(family: &dyn ParamFamily<P>, cfg: &SearchConfig) -> Result<CandidateSet<P>, SearchError> {
    let lower = family.lower();
    let upper = family.upper();
    let dim = lower.len();
    if dim == 0 || upper.len() != dim {
        return Err(SearchError::Config("family box must have matching nonzero dimensions".into()));
    }
    if lower.iter().zip(&upper).any(|(l, u)| !(l <= u)) {
        return Err(SearchError::Config("family box has lower > upper".into()));
    }
    let n = cfg.grid_points;
    if n < 2 {
        return Err(SearchError::Config("grid needs at least 2 points per coordinate".into()));
    }
    let total = (n as u128).checked_pow(dim as u32).unwrap_or(u128::MAX);
    if total > MAX_GRID_CANDIDATES as u128 {
        return Err(SearchError::GridTooLarge(total));
    }
    let step: Vec<f64> = lower.iter().zip(&upper).map(|(l, u)| (u - l) / (n - 1) as f64).collect();
    let mut candidates = Vec::new();
    let mut rejected = 0;
    let mut index = vec![0usize; dim];
    loop {
        let theta: Vec<f64> = (0..dim).map(|j| grid_coordinate(lower[j], upper[j], n, index[j])).collect();
        match family.decode(&theta) {
            Some(policy) => candidates.push(Candidate { params: theta, policy }),
            None => rejected += 1,
        }
        let mut j = dim;
        loop {
            if j == 0 {
                return if candidates.is_empty() {
                    Err(SearchError::NoFeasibleCandidate)
                } else {
                    Ok(CandidateSet { candidates, step, grid_points: n, rejected })
                };
            }
            j -= 1;
            index[j] += 1;
            if index[j] < n {
                break;
            }
            index[j] = 0;
        }
    }
}

fn grid_coordinate(lo: f64, hi: f64, n: usize, i: usize) -> f64 {
    if i + 1 == n {
        hi
    } else {
        lo + (hi - lo) * (i as f64) / ((n - 1) as f64)
    }
}

/// A probed point and its objective value.
#[derive(Debug, Clone, PartialEq)]
pub struct Probe {
    pub params: Vec<f64>,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchOutcome<P> {
    pub policy: P,
    pub params: Vec<f64>,
    pub value: f64,
    /// Grid index of the winner, `None` if refinement moved it.
    pub grid_index: Option<usize>,
    pub probed: usize,
    pub refinement_steps: usize,
}

fn lex_cmp(a: &[f64], b: &[f64]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            Ordering::Equal => continue,
            o => return o,
        }
    }
    a.len().cmp(&b.len())
}

/// `a` beats `b` when its value is smaller, or equal with smaller params.
fn better(value_a: f64, params_a: &[f64], value_b: f64, params_b: &[f64]) -> bool {
    match value_a.total_cmp(&value_b) {
        Ordering::Less => true,
        Ordering::Greater => false,
        Ordering::Equal => lex_cmp(params_a, params_b) == Ordering::Less,
    }
}

/// Index of the smallest value; NaN never wins, ties go to the lowest index.
pub fn argmin_index(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, v) in values.iter().enumerate() {
        if v.is_nan() {
            continue;
        }
        match best {
            None => best = Some(i),
            Some(b) if *v < values[b] => best = Some(i),
            _ => {}
        }
    }
    best
}

/// Picks the best grid candidate from precomputed `grid_values`, then
/// refines it with `fresh` evaluations when `family` is given.
///
/// Every probe is appended to `probes` when it is supplied.
pub fn minimize_on_candidates<P: Clone>(
    set: &CandidateSet<P>,
    family: Option<&dyn ParamFamily<P>>,
    cfg: &SearchConfig,
    grid_values: &[f64],
    mut fresh: impl FnMut(&P) -> Result<f64, SearchError>,
    mut probes: Option<&mut Vec<Probe>>,
) -> Result<SearchOutcome<P>, SearchError> {
    if set.is_empty() {
        return Err(SearchError::EmptyClass);
    }
    debug_assert_eq!(grid_values.len(), set.len());
    let start = argmin_index(grid_values).ok_or(SearchError::NoFeasibleCandidate)?;
    if let Some(log) = probes.as_deref_mut() {
        log.extend(set.candidates.iter().zip(grid_values).map(|(c, v)| Probe { params: c.params.clone(), value: *v }));
    }
    let mut best_params = set.candidates[start].params.clone();
    let mut best_policy = set.candidates[start].policy.clone();
    let mut best_value = grid_values[start];
    let mut grid_index = Some(start);
    let mut probed = set.len();
    let mut refinement_steps = 0;

    if let Some(family) = family {
        let lower = family.lower();
        let upper = family.upper();
        let dim = lower.len();
        let mut h = set.step.clone();
        let offsets = stencil(dim);
        for _ in 0..cfg.refine_rounds {
            for v in h.iter_mut() {
                *v *= 0.5;
            }
            refinement_steps += 1;
            let centre = best_params.clone();
            for off in &offsets {
                let theta: Vec<f64> = (0..dim)
                    .map(|j| (centre[j] + off[j] as f64 * h[j]).clamp(lower[j], upper[j]))
                    .collect();
                if theta == centre {
                    continue;
                }
                let Some(policy) = family.decode(&theta) else { continue };
                let value = fresh(&policy)?;
                probed += 1;
                if let Some(log) = probes.as_deref_mut() {
                    log.push(Probe { params: theta.clone(), value });
                }
                if better(value, &theta, best_value, &best_params) {
                    best_value = value;
                    best_params = theta;
                    best_policy = policy;
                    grid_index = None;
                }
            }
        }
    }
    Ok(SearchOutcome { policy: best_policy, params: best_params, value: best_value, grid_index, probed, refinement_steps })
}

/// Offsets in `{−1, 0, 1}^dim` without the origin, lexicographic; axis
/// moves only when the full stencil is too large.
fn stencil(dim: usize) -> Vec<Vec<i8>> {
    let full = 3usize.checked_pow(dim as u32).unwrap_or(usize::MAX);
    if full > MAX_FULL_STENCIL {
        let mut out = Vec::with_capacity(2 * dim);
        for j in 0..dim {
            for s in [-1i8, 1] {
                let mut v = vec![0i8; dim];
                v[j] = s;
                out.push(v);
            }
        }
        return out;
    }
    let mut out = Vec::with_capacity(full - 1);
    let mut v = vec![-1i8; dim];
    loop {
        if v.iter().any(|&x| x != 0) {
            out.push(v.clone());
        }
        let mut j = dim;
        loop {
            if j == 0 {
                return out;
            }
            j -= 1;
            v[j] += 1;
            if v[j] <= 1 {
                break;
            }
            v[j] = -1;
        }
    }
}
