//! Multi-label CART trees and random forests.

use ndarray::ArrayView2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::LabelVector;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    Gini,
    InfoGain,
}

impl Criterion {
    fn impurity(self, positives: usize, n: usize) -> f64 {
        if n == 0 {
            return 0.0;
        }
        let p = positives as f64 / n as f64;
        match self {
            Criterion::Gini => 2.0 * p * (1.0 - p),
            Criterion::InfoGain => {
                let h = |q: f64| if q > 0.0 { -q * q.log2() } else { 0.0 };
                h(p) + h(1.0 - p)
            }
        }
    }

    fn mean_impurity(self, positives: &[usize], n: usize) -> f64 {
        positives.iter().map(|&c| self.impurity(c, n)).sum::<f64>() / positives.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum TreeNode {
    Leaf {
        fractions: Vec<f64>,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
}

impl TreeNode {
    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    pub fn leaf_count(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 1,
            TreeNode::Split { left, right, .. } => left.leaf_count() + right.leaf_count(),
        }
    }

    fn leaf_for(&self, x: &[f64]) -> &[f64] {
        let mut node = self;
        loop {
            match node {
                TreeNode::Leaf { fractions } => return fractions,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => node = if x[*feature] <= *threshold { left } else { right },
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeConfig {
    pub criterion: Criterion,
    pub max_depth: usize,
    /// Number of candidate features sampled per node; all when absent.
    pub feature_subset: Option<usize>,
}

struct Builder<'a> {
    x: ArrayView2<'a, f64>,
    y: &'a [LabelVector],
    labels: usize,
    config: TreeConfig,
    rng: Rng,
}

impl Builder<'_> {
    fn positives(&self, idx: &[usize]) -> Vec<usize> {
        let mut counts = vec![0; self.labels];
        for &i in idx {
            for (c, &b) in counts.iter_mut().zip(self.y[i].bits()) {
                *c += b as usize;
            }
        }
        counts
    }

    fn leaf(&self, idx: &[usize], positives: &[usize]) -> TreeNode {
        TreeNode::Leaf {
            fractions: positives.iter().map(|&c| c as f64 / idx.len() as f64).collect(),
        }
    }

    fn candidates(&mut self) -> Vec<usize> {
        let m = self.x.ncols();
        match self.config.feature_subset {
            Some(s) if s < m => {
                let mut f = self.rng.sample_indices(m, s);
                f.sort_unstable();
                f
            }
            _ => (0..m).collect(),
        }
    }

    fn build(&mut self, idx: &[usize], depth: usize) -> TreeNode {
        let n = idx.len();
        let positives = self.positives(idx);
        let pure = positives.iter().all(|&c| c == 0 || c == n);
        if pure || depth >= self.config.max_depth || n < 2 {
            return self.leaf(idx, &positives);
        }
        let parent = self.config.criterion.mean_impurity(&positives, n);
        let mut best: Option<(f64, usize, f64)> = None;
        for f in self.candidates() {
            let mut order = idx.to_vec();
            order.sort_by(|&a, &b| self.x[[a, f]].total_cmp(&self.x[[b, f]]).then(a.cmp(&b)));
            let mut left = vec![0usize; self.labels];
            for cut in 1..n {
                for (c, &b) in left.iter_mut().zip(self.y[order[cut - 1]].bits()) {
                    *c += b as usize;
                }
                let lo = self.x[[order[cut - 1], f]];
                let hi = self.x[[order[cut], f]];
                if lo == hi {
                    continue;
                }
                let right: Vec<usize> = positives.iter().zip(&left).map(|(t, l)| t - l).collect();
                let score = (cut as f64 * self.config.criterion.mean_impurity(&left, cut)
                    + (n - cut) as f64 * self.config.criterion.mean_impurity(&right, n - cut))
                    / n as f64;
                if best.is_none_or(|(s, _, _)| score < s) {
                    let mut threshold = lo + (hi - lo) / 2.0;
                    if !(threshold < hi) || !threshold.is_finite() {
                        threshold = lo;
                    }
                    best = Some((score, f, threshold));
                }
            }
        }
        match best {
            Some((score, feature, threshold)) if score < parent => {
                let (l, r): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| self.x[[i, feature]] <= threshold);
                let left = self.build(&l, depth + 1);
                let right = self.build(&r, depth + 1);
                TreeNode::Split {
                    feature,
                    threshold,
                    left: Box::new(left),
                    right: Box::new(right),
                }
            }
            _ => self.leaf(idx, &positives),
        }
    }
}

fn check_shapes(x: ArrayView2<'_, f64>, y: &[LabelVector]) -> Result<usize> {
    if x.nrows() == 0 {
        return Err(Error::InvalidArgument("tree fit needs at least one sample".into()));
    }
    if y.len() != x.nrows() {
        return Err(Error::DimensionMismatch {
            expected: x.nrows(),
            found: y.len(),
        });
    }
    let labels = y[0].len();
    if labels == 0 || y.iter().any(|v| v.len() != labels) {
        return Err(Error::Validation("label rows must share a non-zero width".into()));
    }
    if x.iter().any(|v| v.is_nan()) {
        return Err(Error::InvalidArgument("tree fit input contains NaN".into()));
    }
    Ok(labels)
}

/// Grows a tree on the rows listed in `rows` (duplicates allowed).
fn fit_rows(
    x: ArrayView2<'_, f64>,
    y: &[LabelVector],
    rows: &[usize],
    config: TreeConfig,
    seed: u64,
) -> Result<TreeNode> {
    let labels = check_shapes(x, y)?;
    let mut builder = Builder {
        x,
        y,
        labels,
        config,
        rng: Rng::new(seed),
    };
    Ok(builder.build(rows, 0))
}

pub fn fit_tree(x: ArrayView2<'_, f64>, y: &[LabelVector], config: TreeConfig, seed: u64) -> Result<TreeNode> {
    let rows: Vec<usize> = (0..x.nrows()).collect();
    fit_rows(x, y, &rows, config, seed)
}

/// Leaf fractions thresholded at 0.5, ties to 1.
pub fn predict_tree(tree: &TreeNode, x: &[f64]) -> LabelVector {
    LabelVector::new(tree.leaf_for(x).iter().map(|&p| p >= 0.5).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestTree {
    pub seed: u64,
    pub tree: TreeNode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub trees: Vec<ForestTree>,
}

pub fn fit_forest(
    x: ArrayView2<'_, f64>,
    y: &[LabelVector],
    n_trees: usize,
    criterion: Criterion,
    max_depth: usize,
    seed: u64,
) -> Result<Forest> {
    if n_trees == 0 {
        return Err(Error::InvalidArgument("a forest needs at least one tree".into()));
    }
    check_shapes(x, y)?;
    let n = x.nrows();
    let subset = (x.ncols() as f64).sqrt().ceil() as usize;
    let config = TreeConfig {
        criterion,
        max_depth,
        feature_subset: Some(subset.max(1)),
    };
    let trees = (0..n_trees)
        .into_par_iter()
        .map(|i| {
            let tree_seed = derive_seed(seed, "forest-tree", i as u64);
            let mut rng = Rng::new(tree_seed);
            let rows: Vec<usize> = (0..n).map(|_| rng.below(n as u64) as usize).collect();
            let tree = fit_rows(x, y, &rows, config, rng.next_u64())?;
            Ok(ForestTree { seed: tree_seed, tree })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Forest { trees })
}

/// Per-label majority over tree votes, ties to 1.
pub fn predict_forest(forest: &Forest, x: &[f64]) -> LabelVector {
    let votes: Vec<LabelVector> = forest.trees.iter().map(|t| predict_tree(&t.tree, x)).collect();
    let labels = votes[0].len();
    let bits = (0..labels)
        .map(|j| 2 * votes.iter().filter(|v| v.get(j)).count() >= votes.len())
        .collect();
    LabelVector::new(bits)
}
