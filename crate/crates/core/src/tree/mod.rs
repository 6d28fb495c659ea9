//! Decision-tree machinery shared by the forest and both boosting modes.

mod criterion;
mod grow;
mod histogram;
mod impurity;
mod split;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use self::criterion::{Criterion, GiniCriterion, GradHessCriterion, GradStats, RegParams};
pub use self::grow::{grow_tree, FeatureSampler, GrowParams, GrowTrace, Growth, SplitSearch};
pub use self::histogram::{BinMapper, BinnedMatrix, BundleColumn, NodeHistogram, MAX_BINS};
pub use self::impurity::{gini, gini_gain};
pub use self::split::{best_split_exhaustive, best_split_histogram, SplitCandidate};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TreeError {
    #[error("impurity of an empty node is undefined")]
    EmptyNode,
    #[error("split child is empty")]
    EmptyChild,
    #[error("child class counts do not add up to the parent")]
    CountMismatch,
    #[error("invalid tree parameters: {0}")]
    InvalidParams(String),
    #[error("no training rows")]
    EmptyTrainingSet,
    #[error("feature index {index} out of range for input of length {len}")]
    FeatureIndexOutOfRange { index: usize, len: usize },
    #[error("malformed tree: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum LeafValue {
    /// Per-class training counts (forest mode).
    Counts(Vec<u32>),
    /// Additive leaf weight (boosting mode).
    Weight(f64),
}

impl LeafValue {
    /// Majority class; ties go to the lower class index.
    pub fn majority_class(&self) -> Option<u32> {
        match self {
            LeafValue::Counts(c) => {
                let mut best = 0;
                for (k, &v) in c.iter().enumerate() {
                    if v > c[best] {
                        best = k;
                    }
                }
                Some(best as u32)
            }
            LeafValue::Weight(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Split {
        feature: u32,
        threshold: f64,
        left: u32,
        right: u32,
        gain: f64,
        /// Hessian mass (boosting) or sample count (forest) reaching the node.
        cover: f64,
        samples: u32,
    },
    Leaf {
        value: LeafValue,
        cover: f64,
        samples: u32,
    },
}

impl Node {
    pub fn samples(&self) -> u32 {
        match self {
            Node::Split { samples, .. } | Node::Leaf { samples, .. } => *samples,
        }
    }
}

/// A binary tree stored as a node array with the root at index 0.
/// Children always sit at higher indices than their parent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    nodes: Vec<Node>,
    depth: u32,
}

impl DecisionTree {
    /// Validates structure: single root, two children per split, every
    /// non-root node referenced exactly once and after its parent.
    pub fn from_nodes(nodes: Vec<Node>) -> Result<DecisionTree, TreeError> {
        if nodes.is_empty() {
            return Err(TreeError::Malformed("no nodes".into()));
        }
        let mut parents = vec![0u32; nodes.len()];
        let mut depth_of = vec![0u32; nodes.len()];
        for (i, n) in nodes.iter().enumerate() {
            if let Node::Split { left, right, .. } = n {
                for &c in [left, right] {
                    let c = c as usize;
                    if c <= i || c >= nodes.len() {
                        return Err(TreeError::Malformed(format!(
                            "node {i} has child {c} out of order"
                        )));
                    }
                    parents[c] += 1;
                    depth_of[c] = depth_of[i] + 1;
                }
            }
        }
        if parents[0] != 0 || parents[1..].iter().any(|&p| p != 1) {
            return Err(TreeError::Malformed("node reference count".into()));
        }
        let depth = depth_of.iter().copied().max().unwrap_or(0);
        Ok(DecisionTree { nodes, depth })
    }

    pub(crate) fn from_nodes_unchecked(nodes: Vec<Node>, depth: u32) -> DecisionTree {
        DecisionTree { nodes, depth }
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, Node::Leaf { .. }))
            .count()
    }

    pub fn max_feature(&self) -> Option<u32> {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                Node::Split { feature, .. } => Some(*feature),
                Node::Leaf { .. } => None,
            })
            .max()
    }

    /// Index of the leaf reached by an input whose feature `j` is `value(j)`.
    #[inline]
    pub fn leaf_index_by<F: Fn(usize) -> f64>(&self, value: F) -> usize {
        let mut i = 0usize;
        loop {
            match &self.nodes[i] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => {
                    i = if value(*feature as usize) <= *threshold {
                        *left as usize
                    } else {
                        *right as usize
                    };
                }
                Node::Leaf { .. } => return i,
            }
        }
    }

    pub fn leaf_value(&self, leaf: usize) -> &LeafValue {
        match &self.nodes[leaf] {
            Node::Leaf { value, .. } => value,
            Node::Split { .. } => panic!("node {leaf} is not a leaf"),
        }
    }

    /// Root-to-leaf descent; values `<= threshold` go left.
    pub fn traverse(&self, x: &[f64]) -> Result<&LeafValue, TreeError> {
        if let Some(m) = self.max_feature() {
            if m as usize >= x.len() {
                return Err(TreeError::FeatureIndexOutOfRange {
                    index: m as usize,
                    len: x.len(),
                });
            }
        }
        Ok(self.leaf_value(self.leaf_index_by(|j| x[j])))
    }

    /// Leaf weight for boosting trees; panics on count leaves.
    #[inline]
    pub fn weight(&self, x: &[f64]) -> f64 {
        match self.leaf_value(self.leaf_index_by(|j| x[j])) {
            LeafValue::Weight(w) => *w,
            LeafValue::Counts(_) => panic!("weight() on a classification tree"),
        }
    }

    pub(crate) fn scale_weights(&mut self, factor: f64) {
        for n in &mut self.nodes {
            if let Node::Leaf {
                value: LeafValue::Weight(w),
                ..
            } = n
            {
                *w *= factor;
            }
        }
    }
}
