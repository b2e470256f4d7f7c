use std::fmt;
use std::sync::Arc;

use rand_chacha::ChaCha8Rng;

use super::ComplexityError;
use crate::rng::{substream, Purpose, StreamId};

/// Rademacher sign, `±1`.
pub type Sign = i8;

type NodeSampler<Z, Zeta> = Arc<dyn Fn(&mut ChaCha8Rng) -> (Z, Zeta) + Send + Sync>;

enum Nodes<Z, Zeta> {
    /// Heap order: the root is 0, children of `i` are `2i + 1` (sign −1)
    /// and `2i + 2` (sign +1).
    Explicit(Vec<(Z, Zeta)>),
    /// Node values drawn on demand from a generator seeded by the node path.
    Lazy { seed: u64, sampler: NodeSampler<Z, Zeta> },
}

/// Complete binary tree of instances `(z, ζ)` indexed by sign prefixes.
///
/// The node for round `t` is addressed by `ε_{1:t−1}`; a tree of depth `T`
/// has `2^T − 1` nodes.
pub struct RademacherTree<Z, Zeta> {
    depth: usize,
    nodes: Nodes<Z, Zeta>,
}

impl<Z: Clone, Zeta: Clone> Clone for RademacherTree<Z, Zeta> {
    fn clone(&self) -> Self {
        let nodes = match &self.nodes {
            Nodes::Explicit(v) => Nodes::Explicit(v.clone()),
            Nodes::Lazy { seed, sampler } => Nodes::Lazy { seed: *seed, sampler: Arc::clone(sampler) },
        };
        RademacherTree { depth: self.depth, nodes }
    }
}

impl<Z, Zeta> fmt::Debug for RademacherTree<Z, Zeta> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match &self.nodes {
            Nodes::Explicit(_) => "explicit",
            Nodes::Lazy { .. } => "lazy",
        };
        f.debug_struct("RademacherTree").field("depth", &self.depth).field("nodes", &kind).finish()
    }
}

/// Largest depth a lazy tree addresses; paths are packed into a `u64`.
const MAX_LAZY_DEPTH: usize = 63;

impl<Z: Clone, Zeta: Clone> RademacherTree<Z, Zeta> {
    /// Explicit tree from `2^depth − 1` nodes in heap order.
    pub fn from_nodes(depth: usize, nodes: Vec<(Z, Zeta)>) -> Result<Self, ComplexityError> {
        if depth == 0 || depth >= usize::BITS as usize {
            return Err(ComplexityError::Input(format!("tree depth {depth} out of range")));
        }
        let expected = (1usize << depth) - 1;
        if nodes.len() != expected {
            return Err(ComplexityError::Input(format!(
                "depth {depth} needs {expected} nodes, got {}",
                nodes.len()
            )));
        }
        Ok(RademacherTree { depth, nodes: Nodes::Explicit(nodes) })
    }

    /// Explicit tree whose node at prefix `ε_{1:t−1}` is `f(prefix)`.
    pub fn from_fn(depth: usize, mut f: impl FnMut(&[Sign]) -> (Z, Zeta)) -> Result<Self, ComplexityError> {
        if depth == 0 || depth > 24 {
            return Err(ComplexityError::Input(format!("explicit tree depth {depth} out of range")));
        }
        let mut nodes = Vec::with_capacity((1 << depth) - 1);
        for i in 0..(1usize << depth) - 1 {
            nodes.push(f(&prefix_of(i)));
        }
        Self::from_nodes(depth, nodes)
    }

    /// Tree whose every node is `value`.
    pub fn constant(depth: usize, value: (Z, Zeta)) -> Result<Self, ComplexityError> {
        Self::from_fn(depth, |_| value.clone())
    }

    /// Lazy tree: the node at a prefix is `sampler` applied to a generator
    /// seeded by `(seed, prefix)`, so every node is reproducible.
    pub fn lazy(
        depth: usize,
        seed: u64,
        sampler: impl Fn(&mut ChaCha8Rng) -> (Z, Zeta) + Send + Sync + 'static,
    ) -> Result<Self, ComplexityError> {
        if depth == 0 || depth > MAX_LAZY_DEPTH {
            return Err(ComplexityError::Input(format!("lazy tree depth {depth} out of range")));
        }
        Ok(RademacherTree { depth, nodes: Nodes::Lazy { seed, sampler: Arc::new(sampler) } })
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn is_explicit(&self) -> bool {
        matches!(self.nodes, Nodes::Explicit(_))
    }

    /// Number of nodes, `2^T − 1`.
    pub fn node_count(&self) -> u128 {
        (1u128 << self.depth) - 1
    }

    /// Node addressed by `prefix`, which must be shorter than the depth.
    pub fn node(&self, prefix: &[Sign]) -> Result<(Z, Zeta), ComplexityError> {
        if prefix.len() >= self.depth {
            return Err(ComplexityError::Input(format!(
                "prefix of length {} addresses beyond depth {}",
                prefix.len(),
                self.depth
            )));
        }
        Ok(match &self.nodes {
            Nodes::Explicit(v) => v[heap_index(prefix)].clone(),
            Nodes::Lazy { seed, sampler } => {
                let mut bits = 0u64;
                for s in prefix {
                    bits = (bits << 1) | u64::from(*s > 0);
                }
                let id = StreamId::new(prefix.len() as u64, bits, Purpose::Tree);
                sampler(&mut substream(*seed, id))
            }
        })
    }

    /// Instances along the path selected by `signs`: entry `t` is the node
    /// at `signs[..t]`. The last sign never selects a node.
    pub fn path(&self, signs: &[Sign]) -> Result<Vec<(Z, Zeta)>, ComplexityError> {
        if signs.len() > self.depth {
            return Err(ComplexityError::Input(format!(
                "{} signs exceed tree depth {}",
                signs.len(),
                self.depth
            )));
        }
        (0..signs.len()).map(|t| self.node(&signs[..t])).collect()
    }

    /// Explicit nodes in heap order; `None` for lazy trees.
    pub fn explicit_nodes(&self) -> Option<&[(Z, Zeta)]> {
        match &self.nodes {
            Nodes::Explicit(v) => Some(v),
            Nodes::Lazy { .. } => None,
        }
    }

    /// Replaces explicit node `index`; a no-op error on lazy trees.
    pub fn set_node(&mut self, index: usize, value: (Z, Zeta)) -> Result<(), ComplexityError> {
        match &mut self.nodes {
            Nodes::Explicit(v) if index < v.len() => {
                v[index] = value;
                Ok(())
            }
            Nodes::Explicit(v) => Err(ComplexityError::Input(format!("node {index} out of {}", v.len()))),
            Nodes::Lazy { .. } => Err(ComplexityError::Input("lazy tree nodes are fixed".into())),
        }
    }
}

fn heap_index(prefix: &[Sign]) -> usize {
    prefix.iter().fold(0, |i, s| 2 * i + if *s > 0 { 2 } else { 1 })
}

/// Sign prefix addressed by heap index `i`.
fn prefix_of(mut i: usize) -> Vec<Sign> {
    let mut out = Vec::new();
    while i > 0 {
        let s = if i % 2 == 0 { 1 } else { -1 };
        out.push(s);
        i = (i - 1) / 2;
    }
    out.reverse();
    out
}
