//! CART regression trees with a minimum leaf size.
//!
//! Split candidates are midpoints between consecutive sorted unique feature
//! values. A node splits only when the best candidate strictly improves the
//! criterion and both children keep at least `min_leaf` training units.
//! Ties break to the lowest feature index, then the lowest threshold.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::Matrix;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SplitCriterion {
    /// Minimize within-cell sum of squared errors.
    Mse,
    /// Penalize the variance of each cell-mean estimate on top of MSE,
    /// anticipating reuse of the partition on a fresh sample.
    Emse,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Leaf {
        prediction: f64,
        count: usize,
        leaf_id: usize,
    },
    Internal {
        feature: usize,
        threshold: f64,
        /// Training mean and count, kept so collapses can turn this node
        /// back into a leaf.
        mean: f64,
        count: usize,
        left: Box<Node>,
        right: Box<Node>,
    },
}

impl Node {
    fn is_leaf(&self) -> bool {
        matches!(self, Node::Leaf { .. })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub root: Node,
    pub max_depth: usize,
    pub min_leaf: usize,
    pub n_leaves: usize,
}

impl Tree {
    /// Leaf id and prediction for one row. Routing is strict: left when
    /// `value < threshold`.
    pub fn apply_row(&self, x: &[f64]) -> (usize, f64) {
        let mut node = &self.root;
        loop {
            match node {
                Node::Leaf {
                    prediction,
                    leaf_id,
                    ..
                } => return (*leaf_id, *prediction),
                Node::Internal {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => {
                    node = if x[*feature] < *threshold { left } else { right };
                }
            }
        }
    }

    pub fn predict_row(&self, x: &[f64]) -> f64 {
        self.apply_row(x).1
    }

    /// Leaf id per row of `x`.
    pub fn assign(&self, x: &Matrix) -> Vec<usize> {
        (0..x.n_rows()).map(|i| self.apply_row(x.row(i)).0).collect()
    }

    pub fn depth(&self) -> usize {
        fn d(n: &Node) -> usize {
            match n {
                Node::Leaf { .. } => 0,
                Node::Internal { left, right, .. } => 1 + d(left).max(d(right)),
            }
        }
        d(&self.root)
    }

    /// Training count of every leaf, in leaf-id order.
    pub fn leaf_counts(&self) -> Vec<usize> {
        let mut out = vec![0usize; self.n_leaves];
        fn walk(n: &Node, out: &mut Vec<usize>) {
            match n {
                Node::Leaf { count, leaf_id, .. } => out[*leaf_id] = *count,
                Node::Internal { left, right, .. } => {
                    walk(left, out);
                    walk(right, out);
                }
            }
        }
        walk(&self.root, &mut out);
        out
    }

    /// Features used in at least one split.
    pub fn split_features(&self) -> Vec<usize> {
        let mut feats = Vec::new();
        fn walk(n: &Node, feats: &mut Vec<usize>) {
            if let Node::Internal {
                feature,
                left,
                right,
                ..
            } = n
            {
                if !feats.contains(feature) {
                    feats.push(*feature);
                }
                walk(left, feats);
                walk(right, feats);
            }
        }
        walk(&self.root, &mut feats);
        feats.sort_unstable();
        feats
    }

    fn renumber_leaves(&mut self) {
        fn walk(n: &mut Node, next: &mut usize) {
            match n {
                Node::Leaf { leaf_id, .. } => {
                    *leaf_id = *next;
                    *next += 1;
                }
                Node::Internal { left, right, .. } => {
                    walk(left, next);
                    walk(right, next);
                }
            }
        }
        let mut next = 0;
        walk(&mut self.root, &mut next);
        self.n_leaves = next;
    }
}

struct NodeStats {
    count: usize,
    sum: f64,
    sumsq: f64,
}

impl NodeStats {
    fn of(idx: &[usize], y: &[f64]) -> Self {
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for &i in idx {
            sum += y[i];
            sumsq += y[i] * y[i];
        }
        NodeStats {
            count: idx.len(),
            sum,
            sumsq,
        }
    }

    fn mean(&self) -> f64 {
        self.sum / self.count as f64
    }

}

/// Per-cell cost in the chosen criterion (lower is better). Summed across
/// cells and compared before/after a candidate split.
fn cell_cost(count: f64, sum: f64, sumsq: f64, criterion: SplitCriterion) -> f64 {
    let mean = sum / count;
    let fit = -count * mean * mean;
    match criterion {
        SplitCriterion::Mse => fit,
        SplitCriterion::Emse => {
            // N_ℓ·V̂(μ̂) with V̂ = sample variance / N_ℓ; zero for singletons.
            let penalty = if count > 1.0 {
                (sumsq - sum * sum / count).max(0.0) / (count - 1.0)
            } else {
                0.0
            };
            fit + 2.0 * penalty
        }
    }
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    left_idx: Vec<usize>,
    right_idx: Vec<usize>,
}

/// Exhaustive scan over candidate features and midpoint thresholds.
/// Returns the best admissible split, if any strictly improves the
/// criterion.
fn best_split(
    x: &Matrix,
    y: &[f64],
    idx: &[usize],
    candidates: &[usize],
    min_leaf: usize,
    criterion: SplitCriterion,
) -> Option<BestSplit> {
    let parent = NodeStats::of(idx, y);
    if parent.count < 2 * min_leaf {
        return None;
    }
    let parent_cost = cell_cost(parent.count as f64, parent.sum, parent.sumsq, criterion);
    let eps = 1e-12 * (1.0 + parent.sumsq.abs());

    let mut best: Option<BestSplit> = None;
    let mut best_gain = eps;
    for &f in candidates {
        let mut order: Vec<usize> = idx.to_vec();
        order.sort_by(|&a, &b| {
            x.get(a, f)
                .partial_cmp(&x.get(b, f))
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.cmp(&b))
        });
        let mut left_count = 0.0;
        let mut left_sum = 0.0;
        let mut left_sumsq = 0.0;
        for cut in 1..order.len() {
            let i = order[cut - 1];
            left_count += 1.0;
            left_sum += y[i];
            left_sumsq += y[i] * y[i];
            let lo = x.get(order[cut - 1], f);
            let hi = x.get(order[cut], f);
            if lo >= hi {
                continue; // tied feature values cannot be separated
            }
            if cut < min_leaf || order.len() - cut < min_leaf {
                continue;
            }
            let right_count = parent.count as f64 - left_count;
            let right_sum = parent.sum - left_sum;
            let right_sumsq = parent.sumsq - left_sumsq;
            let cost = cell_cost(left_count, left_sum, left_sumsq, criterion)
                + cell_cost(right_count, right_sum, right_sumsq, criterion);
            let gain = parent_cost - cost;
            if gain > best_gain {
                best_gain = gain;
                let threshold = 0.5 * (lo + hi);
                best = Some(BestSplit {
                    feature: f,
                    threshold,
                    left_idx: order[..cut].to_vec(),
                    right_idx: order[cut..].to_vec(),
                });
            }
        }
    }
    best
}

/// Feature-candidate source per node; `None` means all features.
pub(crate) trait FeatureSampler {
    fn candidates(&mut self, k: usize) -> Vec<usize>;
}

pub(crate) struct AllFeatures;

impl FeatureSampler for AllFeatures {
    fn candidates(&mut self, k: usize) -> Vec<usize> {
        (0..k).collect()
    }
}

pub(crate) struct RandomSubset<'a, R: Rng> {
    pub mtry: usize,
    pub rng: &'a mut R,
}

impl<R: Rng> FeatureSampler for RandomSubset<'_, R> {
    fn candidates(&mut self, k: usize) -> Vec<usize> {
        if self.mtry >= k {
            return (0..k).collect();
        }
        // partial Fisher-Yates
        let mut pool: Vec<usize> = (0..k).collect();
        for i in 0..self.mtry {
            let j = self.rng.random_range(i..k);
            pool.swap(i, j);
        }
        let mut picked = pool[..self.mtry].to_vec();
        picked.sort_unstable();
        picked
    }
}

fn grow<S: FeatureSampler>(
    x: &Matrix,
    y: &[f64],
    idx: Vec<usize>,
    depth_left: usize,
    min_leaf: usize,
    criterion: SplitCriterion,
    sampler: &mut S,
) -> Node {
    let stats = NodeStats::of(&idx, y);
    let leaf = |stats: &NodeStats| Node::Leaf {
        prediction: stats.mean(),
        count: stats.count,
        leaf_id: 0,
    };
    if depth_left == 0 || stats.count < 2 * min_leaf {
        return leaf(&stats);
    }
    let candidates = sampler.candidates(x.n_cols());
    match best_split(x, y, &idx, &candidates, min_leaf, criterion) {
        None => leaf(&stats),
        Some(split) => {
            // children grown left-first so sampled candidates are
            // consumed in a deterministic order
            let left = grow(
                x,
                y,
                split.left_idx,
                depth_left - 1,
                min_leaf,
                criterion,
                sampler,
            );
            let right = grow(
                x,
                y,
                split.right_idx,
                depth_left - 1,
                min_leaf,
                criterion,
                sampler,
            );
            Node::Internal {
                feature: split.feature,
                threshold: split.threshold,
                mean: stats.mean(),
                count: stats.count,
                left: Box::new(left),
                right: Box::new(right),
            }
        }
    }
}

pub(crate) fn fit_with_sampler<S: FeatureSampler>(
    x: &Matrix,
    y: &[f64],
    max_depth: usize,
    min_leaf: usize,
    criterion: SplitCriterion,
    sampler: &mut S,
) -> Result<Tree> {
    let n = x.n_rows();
    if n == 0 || y.len() != n {
        return Err(Error::EmptyInput);
    }
    if min_leaf == 0 {
        return Err(Error::Internal("min_leaf must be at least 1".into()));
    }
    if n < min_leaf {
        return Err(Error::TooFewUnits {
            need: min_leaf,
            have: n,
        });
    }
    let root = grow(
        x,
        y,
        (0..n).collect(),
        max_depth,
        min_leaf,
        criterion,
        sampler,
    );
    let mut tree = Tree {
        root,
        max_depth,
        min_leaf,
        n_leaves: 0,
    };
    tree.renumber_leaves();
    Ok(tree)
}

/// Fit a regression tree by greedy recursive splitting.
pub fn cart_fit(
    x: &Matrix,
    y: &[f64],
    max_depth: usize,
    min_leaf: usize,
    criterion: SplitCriterion,
) -> Result<Tree> {
    fit_with_sampler(x, y, max_depth, min_leaf, criterion, &mut AllFeatures)
}

/// Collapse tree cells until every cell holds at least `c_b` rows of
/// `x_new`. The deepest undersized cell is merged into its sibling first;
/// the collapsed node predicts its training mean.
pub fn tree_prune_to_min_leaf(tree: &Tree, x_new: &Matrix, c_b: usize) -> Result<Tree> {
    let mut tree = tree.clone();
    loop {
        // depth and path (leaf-order position) of every undersized leaf
        let mut counts = vec![0usize; tree.n_leaves];
        for i in 0..x_new.n_rows() {
            counts[tree.apply_row(x_new.row(i)).0] += 1;
        }
        if tree.root.is_leaf() {
            let total = x_new.n_rows();
            if total < c_b {
                return Err(Error::CannotSatisfy {
                    c_b,
                    available: total,
                });
            }
            return Ok(tree);
        }

        // Find the deepest leaf below c_b; ties resolve to the leftmost.
        fn find(n: &Node, depth: usize, counts: &[usize], c_b: usize) -> Option<(usize, usize)> {
            match n {
                Node::Leaf { leaf_id, .. } => {
                    (counts[*leaf_id] < c_b).then_some((depth, *leaf_id))
                }
                Node::Internal { left, right, .. } => {
                    let l = find(left, depth + 1, counts, c_b);
                    let r = find(right, depth + 1, counts, c_b);
                    match (l, r) {
                        (Some(a), Some(b)) => Some(if b.0 > a.0 { b } else { a }),
                        (a, b) => a.or(b),
                    }
                }
            }
        }
        let Some((_, victim)) = find(&tree.root, 0, &counts, c_b) else {
            return Ok(tree);
        };

        // Collapse the victim leaf's parent into a leaf.
        fn collapse(n: &mut Node, victim: usize) -> bool {
            if let Node::Internal {
                mean,
                count,
                left,
                right,
                ..
            } = n
            {
                let holds_victim = |c: &Node| match c {
                    Node::Leaf { leaf_id, .. } => *leaf_id == victim,
                    Node::Internal { .. } => false,
                };
                if holds_victim(left) || holds_victim(right) {
                    *n = Node::Leaf {
                        prediction: *mean,
                        count: *count,
                        leaf_id: 0,
                    };
                    return true;
                }
                return collapse(left, victim) || collapse(right, victim);
            }
            false
        }
        if !collapse(&mut tree.root, victim) {
            return Err(Error::Internal("prune target not found".into()));
        }
        tree.renumber_leaves();
    }
}

/// Per-cell statistics entering the expected-MSE score.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellStats {
    pub count: usize,
    pub mean: f64,
    /// Estimated variance of the cell-mean estimate.
    pub var_of_mean: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitScore {
    /// −(1/N)·Σ N_ℓ·μ̂²(ℓ)
    pub mse: f64,
    /// mse + (2/N)·Σ N_ℓ·V̂(μ̂(ℓ))
    pub emse: f64,
    pub cells: Vec<CellStats>,
}

/// Evaluate the partition-level MSE and expected-MSE scores from per-cell
/// counts, means, and mean-variance estimates.
pub fn emse_score(cells: &[CellStats]) -> Result<SplitScore> {
    if cells.is_empty() {
        return Err(Error::EmptyPartition);
    }
    let n: usize = cells.iter().map(|c| c.count).sum();
    if n == 0 {
        return Err(Error::EmptyPartition);
    }
    let nf = n as f64;
    let mut fit = 0.0;
    let mut penalty = 0.0;
    for c in cells {
        fit += c.count as f64 * c.mean * c.mean;
        penalty += c.count as f64 * c.var_of_mean;
    }
    let mse = -fit / nf;
    Ok(SplitScore {
        mse,
        emse: mse + 2.0 * penalty / nf,
        cells: cells.to_vec(),
    })
}
