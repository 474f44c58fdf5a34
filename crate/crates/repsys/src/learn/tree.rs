//! CART-style regression tree grown greedily by variance reduction.
//!
//! Split search sorts each feature once per node and scans prefix sums, so
//! candidate thresholds are midpoints between consecutive distinct values.
//! Ties in gain resolve to the lowest feature index, then the lowest
//! threshold, making growth fully deterministic.

use crate::error::{Error, Result};

/// Gains at or below this are treated as zero (pure numerical residue).
const MIN_GAIN: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TreeParams {
    /// Minimum training rows in every leaf.
    pub min_leaf: usize,
    /// Maximum number of split levels above a leaf.
    pub max_depth: usize,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams {
            min_leaf: 5,
            max_depth: 12,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Leaf {
        prediction: f64,
        count: usize,
    },
    Split {
        feature: usize,
        /// Rows with `x[feature] <= threshold` go left.
        threshold: f64,
        left: Box<Node>,
        right: Box<Node>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeafInfo {
    pub prediction: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionTree {
    root: Node,
    n_features: usize,
    params: TreeParams,
}

/// Sum, sum of squares, and the implied within-node squared error.
fn sse(sy: f64, sy2: f64, n: usize) -> f64 {
    (sy2 - sy * sy / n as f64).max(0.0)
}

impl RegressionTree {
    pub fn fit(rows: &[Vec<f64>], targets: &[f64], params: TreeParams) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::EmptyTrainingSet);
        }
        if params.min_leaf == 0 {
            return Err(Error::Config("cart_min_leaf must be at least 1".to_string()));
        }
        if params.max_depth == 0 {
            return Err(Error::Config("cart_max_depth must be at least 1".to_string()));
        }
        let n_features = rows[0].len();
        let indices: Vec<usize> = (0..rows.len()).collect();
        let root = grow(rows, targets, indices, 0, &params);
        Ok(RegressionTree {
            root,
            n_features,
            params,
        })
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.n_features {
            return Err(Error::FeatureArity {
                expected: self.n_features,
                got: x.len(),
            });
        }
        let mut node = &self.root;
        loop {
            match node {
                Node::Leaf { prediction, .. } => return Ok(*prediction),
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    node = if x[*feature] <= *threshold { left } else { right };
                }
            }
        }
    }

    /// Index (in depth-first order) of the leaf a query falls into.
    pub fn leaf_index(&self, x: &[f64]) -> Result<usize> {
        if x.len() != self.n_features {
            return Err(Error::FeatureArity {
                expected: self.n_features,
                got: x.len(),
            });
        }
        let mut node = &self.root;
        let mut index = 0usize;
        loop {
            match node {
                Node::Leaf { .. } => return Ok(index),
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    if x[*feature] <= *threshold {
                        node = left;
                    } else {
                        index += count_leaves(left);
                        node = right;
                    }
                }
            }
        }
    }

    /// All leaves in depth-first order.
    pub fn leaves(&self) -> Vec<LeafInfo> {
        let mut out = Vec::new();
        collect_leaves(&self.root, &mut out);
        out
    }

    pub fn n_leaves(&self) -> usize {
        count_leaves(&self.root)
    }

    /// Number of split levels on the deepest path.
    pub fn depth(&self) -> usize {
        node_depth(&self.root)
    }

    pub fn params(&self) -> &TreeParams {
        &self.params
    }
}

fn count_leaves(node: &Node) -> usize {
    match node {
        Node::Leaf { .. } => 1,
        Node::Split { left, right, .. } => count_leaves(left) + count_leaves(right),
    }
}

fn collect_leaves(node: &Node, out: &mut Vec<LeafInfo>) {
    match node {
        Node::Leaf { prediction, count } => out.push(LeafInfo {
            prediction: *prediction,
            count: *count,
        }),
        Node::Split { left, right, .. } => {
            collect_leaves(left, out);
            collect_leaves(right, out);
        }
    }
}

fn node_depth(node: &Node) -> usize {
    match node {
        Node::Leaf { .. } => 0,
        Node::Split { left, right, .. } => 1 + node_depth(left).max(node_depth(right)),
    }
}

fn grow(
    rows: &[Vec<f64>],
    targets: &[f64],
    indices: Vec<usize>,
    depth: usize,
    params: &TreeParams,
) -> Node {
    let n = indices.len();
    let mean = indices.iter().map(|&i| targets[i]).sum::<f64>() / n as f64;
    if depth >= params.max_depth || n < 2 * params.min_leaf {
        return Node::Leaf {
            prediction: mean,
            count: n,
        };
    }
    match best_split(rows, targets, &indices, params.min_leaf) {
        None => Node::Leaf {
            prediction: mean,
            count: n,
        },
        Some((feature, threshold)) => {
            let (left_idx, right_idx): (Vec<usize>, Vec<usize>) = indices
                .into_iter()
                .partition(|&i| rows[i][feature] <= threshold);
            let left = grow(rows, targets, left_idx, depth + 1, params);
            let right = grow(rows, targets, right_idx, depth + 1, params);
            Node::Split {
                feature,
                threshold,
                left: Box::new(left),
                right: Box::new(right),
            }
        }
    }
}

/// Best (feature, threshold) by variance reduction, or `None` when no
/// admissible split improves on the parent.
fn best_split(
    rows: &[Vec<f64>],
    targets: &[f64],
    indices: &[usize],
    min_leaf: usize,
) -> Option<(usize, f64)> {
    let n = indices.len();
    let n_features = rows[indices[0]].len();
    let total_sy: f64 = indices.iter().map(|&i| targets[i]).sum();
    let total_sy2: f64 = indices.iter().map(|&i| targets[i] * targets[i]).sum();
    let parent_sse = sse(total_sy, total_sy2, n);

    let mut best: Option<(usize, f64)> = None;
    let mut best_gain = MIN_GAIN;
    let mut order: Vec<usize> = Vec::with_capacity(n);
    // `feature` selects a column within each row, not a row.
    #[allow(clippy::needless_range_loop)]
    for feature in 0..n_features {
        order.clear();
        order.extend_from_slice(indices);
        order.sort_by(|&a, &b| {
            rows[a][feature]
                .partial_cmp(&rows[b][feature])
                .expect("finite feature values")
        });

        let mut sy = 0.0;
        let mut sy2 = 0.0;
        for s in 1..n {
            let y = targets[order[s - 1]];
            sy += y;
            sy2 += y * y;
            let prev = rows[order[s - 1]][feature];
            let next = rows[order[s]][feature];
            if prev == next || s < min_leaf || n - s < min_leaf {
                continue;
            }
            let gain = parent_sse - sse(sy, sy2, s) - sse(total_sy - sy, total_sy2 - sy2, n - s);
            if gain > best_gain {
                best_gain = gain;
                // Midpoint, nudged down if rounding lands it on the upper
                // value, so the `<=` routing reproduces this partition.
                let mut threshold = prev + (next - prev) / 2.0;
                if threshold >= next {
                    threshold = prev;
                }
                best = Some((feature, threshold));
            }
        }
    }
    best
}
