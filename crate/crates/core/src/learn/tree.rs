//! CART classification tree over numeric features.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_fit_input, LearnError, Prediction};
use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    Gini,
    Entropy,
}

impl Criterion {
    /// Impurity of a node holding `pos` positives out of `n`.
    fn impurity(self, pos: usize, n: usize) -> f64 {
        if n == 0 {
            return 0.0;
        }
        let p = pos as f64 / n as f64;
        match self {
            Criterion::Gini => 2.0 * p * (1.0 - p),
            Criterion::Entropy => {
                let h = |q: f64| if q > 0.0 { -q * q.log2() } else { 0.0 };
                h(p) + h(1.0 - p)
            }
        }
    }
}

/// How many features each split considers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaxFeatures {
    All,
    /// `ceil(sqrt(d))`
    Sqrt,
    Count(usize),
}

impl MaxFeatures {
    pub fn resolve(self, d: usize) -> usize {
        match self {
            MaxFeatures::All => d,
            MaxFeatures::Sqrt => ((d as f64).sqrt().ceil() as usize).clamp(1, d),
            MaxFeatures::Count(k) => k.clamp(1, d),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub criterion: Criterion,
    /// `None` grows until leaves are pure or too small to split.
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
    pub max_features: MaxFeatures,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams {
            criterion: Criterion::Gini,
            max_depth: None,
            min_samples_split: 2,
            min_samples_leaf: 1,
            max_features: MaxFeatures::All,
        }
    }
}

impl TreeParams {
    pub fn validate(&self) -> Result<(), LearnError> {
        if self.min_samples_split < 2 {
            return Err(LearnError::InvalidParam("min_samples_split must be at least 2".into()));
        }
        if self.min_samples_leaf < 1 {
            return Err(LearnError::InvalidParam("min_samples_leaf must be at least 1".into()));
        }
        if self.max_depth == Some(0) {
            return Err(LearnError::InvalidParam("max_depth must be at least 1".into()));
        }
        if self.max_features == MaxFeatures::Count(0) {
            return Err(LearnError::InvalidParam("max_features must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Node {
    Leaf {
        label: u8,
        /// Fraction of positive training rows that reached this leaf.
        probability: f64,
        samples: usize,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

/// A fitted tree. Node 0 is the root; rows with `x[feature] <= threshold`
/// go left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeModel {
    pub n_features: usize,
    pub nodes: Vec<Node>,
}

impl TreeModel {
    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }

    fn leaf(&self, row: &[f64]) -> (u8, f64) {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { label, probability, .. } => return (label, probability),
                Node::Split { feature, threshold, left, right } => {
                    i = if row[feature] <= threshold { left } else { right };
                }
            }
        }
    }

    pub fn predict_row(&self, row: &[f64]) -> Prediction {
        let (label, probability) = self.leaf(row);
        Prediction { label, probability: Some(probability) }
    }

    /// Checks that every split references existing children.
    pub fn is_well_formed(&self) -> bool {
        !self.nodes.is_empty()
            && self.nodes.iter().all(|n| match *n {
                Node::Leaf { .. } => true,
                Node::Split { feature, left, right, .. } => {
                    feature < self.n_features && left < self.nodes.len() && right < self.nodes.len()
                }
            })
    }
}

pub fn fit_tree(
    x: &Matrix,
    y: &[u8],
    params: &TreeParams,
    seed: u64,
) -> Result<TreeModel, LearnError> {
    check_fit_input(x, y)?;
    let indices: Vec<usize> = (0..x.n_rows()).collect();
    build(x, y, indices, params, seed)
}

/// Grows a tree over `indices` (repeats allowed, as in bootstrap samples).
pub(crate) fn build(
    x: &Matrix,
    y: &[u8],
    indices: Vec<usize>,
    params: &TreeParams,
    seed: u64,
) -> Result<TreeModel, LearnError> {
    params.validate()?;
    if indices.is_empty() {
        return Err(LearnError::EmptyInput);
    }
    let d = x.n_cols();
    let max_features = params.max_features.resolve(d);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut nodes: Vec<Node> = Vec::new();
    // (node slot, depth, rows)
    let mut stack: Vec<(usize, usize, Vec<usize>)> = Vec::new();
    nodes.push(placeholder());
    stack.push((0, 0, indices));
    let mut scratch: Vec<(f64, u8)> = Vec::new();
    let mut feature_order: Vec<usize> = (0..d).collect();

    while let Some((slot, depth, rows)) = stack.pop() {
        let n = rows.len();
        let pos = rows.iter().filter(|&&i| y[i] == 1).count();
        let can_split = pos != 0
            && pos != n
            && n >= params.min_samples_split
            && n >= 2 * params.min_samples_leaf
            && params.max_depth.is_none_or(|m| depth < m);
        let best = if can_split {
            if max_features < d {
                feature_order.shuffle(&mut rng);
            }
            best_split(x, y, &rows, pos, params, max_features, &feature_order, &mut scratch)
        } else {
            None
        };
        match best {
            Some((feature, threshold)) => {
                let (left_rows, right_rows): (Vec<usize>, Vec<usize>) =
                    rows.into_iter().partition(|&i| x.get(i, feature) <= threshold);
                let left = nodes.len();
                nodes.push(placeholder());
                let right = nodes.len();
                nodes.push(placeholder());
                nodes[slot] = Node::Split { feature, threshold, left, right };
                // Right first so the left subtree is numbered before it.
                stack.push((right, depth + 1, right_rows));
                stack.push((left, depth + 1, left_rows));
            }
            None => {
                nodes[slot] = Node::Leaf {
                    label: u8::from(2 * pos > n),
                    probability: pos as f64 / n as f64,
                    samples: n,
                };
            }
        }
    }
    Ok(TreeModel { n_features: d, nodes })
}

fn placeholder() -> Node {
    Node::Leaf { label: 0, probability: 0.0, samples: 0 }
}

/// Best `(feature, threshold)` by impurity decrease. Features are scanned in
/// ascending index order and thresholds in ascending order; only a strictly
/// larger decrease replaces the incumbent, so ties go to the lowest feature
/// and then the lowest threshold.
#[allow(clippy::too_many_arguments)]
fn best_split(
    x: &Matrix,
    y: &[u8],
    rows: &[usize],
    pos: usize,
    params: &TreeParams,
    max_features: usize,
    feature_order: &[usize],
    scratch: &mut Vec<(f64, u8)>,
) -> Option<(usize, f64)> {
    let n = rows.len();
    let parent = params.criterion.impurity(pos, n);
    let min_leaf = params.min_samples_leaf;

    // Pick the candidate features: the first `max_features` non-constant ones
    // in the (possibly shuffled) order, then scan them in index order.
    let mut candidates: Vec<usize> = Vec::with_capacity(max_features);
    for &f in feature_order {
        if candidates.len() == max_features {
            break;
        }
        let first = x.get(rows[0], f);
        if rows.iter().any(|&i| x.get(i, f) != first) {
            candidates.push(f);
        }
    }
    candidates.sort_unstable();

    let mut best: Option<(f64, usize, f64)> = None;
    for f in candidates {
        scratch.clear();
        scratch.extend(rows.iter().map(|&i| (x.get(i, f), y[i])));
        scratch.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
        let mut left_pos = 0usize;
        for k in 0..n - 1 {
            left_pos += scratch[k].1 as usize;
            let n_left = k + 1;
            if scratch[k].0 == scratch[k + 1].0 || n_left < min_leaf || n - n_left < min_leaf {
                continue;
            }
            let n_right = n - n_left;
            let child = (n_left as f64 * params.criterion.impurity(left_pos, n_left)
                + n_right as f64 * params.criterion.impurity(pos - left_pos, n_right))
                / n as f64;
            let gain = parent - child;
            if best.is_none_or(|(g, _, _)| gain > g + 1e-12) {
                let (lo, hi) = (scratch[k].0, scratch[k + 1].0);
                let mut threshold = lo + (hi - lo) / 2.0;
                if threshold >= hi {
                    threshold = lo;
                }
                best = Some((gain, f, threshold));
            }
        }
    }
    best.map(|(_, f, t)| (f, t))
}
