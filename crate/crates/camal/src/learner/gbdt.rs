//! Gradient boosting with squared loss, written out directly: the base score
//! is the label mean, each stage fits one depth-limited regression tree to
//! the current residuals by exhaustive midpoint splits, and contributes
//! scaled by the learning rate.

use crate::error::{Error, Result};

use super::{FeatureVector, RAW_DIM};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreesParams {
    pub n_trees: usize,
    pub max_depth: u32,
    pub learning_rate: f64,
    pub min_leaf: usize,
}

impl Default for TreesParams {
    fn default() -> Self {
        TreesParams {
            n_trees: 100,
            max_depth: 3,
            learning_rate: 0.1,
            min_leaf: 2,
        }
    }
}

impl TreesParams {
    pub fn validate(&self) -> Result<()> {
        if self.max_depth == 0 || self.min_leaf == 0 {
            return Err(Error::learner("max_depth and min_leaf must be positive"));
        }
        if !(0.0 < self.learning_rate && self.learning_rate <= 1.0) {
            return Err(Error::learner(format!(
                "learning rate {} outside (0, 1]",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

/// Preorder node list; a split's left child is the next node, the right
/// child index is stored.
#[derive(Debug, Clone, PartialEq)]
pub enum TreeNode {
    Split {
        feature: usize,
        threshold: f64,
        right: usize,
    },
    Leaf(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionTree {
    pub nodes: Vec<TreeNode>,
}

impl RegressionTree {
    pub fn eval(&self, raw: &[f64; RAW_DIM]) -> f64 {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                TreeNode::Leaf(v) => return *v,
                TreeNode::Split {
                    feature,
                    threshold,
                    right,
                } => {
                    at = if raw[*feature] < *threshold {
                        at + 1
                    } else {
                        *right
                    };
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreesModel {
    /// Mean training label; the stage-zero prediction.
    pub base: f64,
    pub learning_rate: f64,
    pub trees: Vec<RegressionTree>,
    /// Training RMSE after each stage; diagnostics, not persisted.
    pub train_rmse: Vec<f64>,
}

impl TreesModel {
    pub fn eval(&self, raw: &[f64; RAW_DIM]) -> f64 {
        let mut acc = self.base;
        for tree in &self.trees {
            acc += self.learning_rate * tree.eval(raw);
        }
        acc
    }
}

struct SplitChoice {
    feature: usize,
    threshold: f64,
    gain: f64,
}

/// Best (feature, midpoint) split of `idx` by squared-error reduction, both
/// sides at least `min_leaf`. Ties keep the first candidate in feature then
/// threshold order, so building is order-deterministic.
#[allow(clippy::needless_range_loop)]
fn best_split(
    xs: &[[f64; RAW_DIM]],
    target: &[f64],
    idx: &[usize],
    min_leaf: usize,
) -> Option<SplitChoice> {
    let n = idx.len();
    let total_sum: f64 = idx.iter().map(|&i| target[i]).sum();
    let total_sq: f64 = idx.iter().map(|&i| target[i] * target[i]).sum();
    let parent_sse = total_sq - total_sum * total_sum / n as f64;
    let mut best: Option<SplitChoice> = None;
    let mut pairs: Vec<(f64, f64)> = Vec::with_capacity(n);
    for feature in 0..RAW_DIM {
        pairs.clear();
        pairs.extend(idx.iter().map(|&i| (xs[i][feature], target[i])));
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut left_sum = 0.0;
        let mut left_sq = 0.0;
        for p in 1..n {
            let (v, y) = pairs[p - 1];
            left_sum += y;
            left_sq += y * y;
            if p < min_leaf || n - p < min_leaf {
                continue;
            }
            let next = pairs[p].0;
            if v >= next {
                continue;
            }
            let threshold = v + (next - v) / 2.0;
            if !(v < threshold && threshold <= next) {
                continue; // adjacent floats, midpoint collapsed
            }
            let right_sum = total_sum - left_sum;
            let right_sq = total_sq - left_sq;
            let sse = (left_sq - left_sum * left_sum / p as f64)
                + (right_sq - right_sum * right_sum / (n - p) as f64);
            let gain = parent_sse - sse;
            if gain > 1e-12 * (1.0 + parent_sse) && best.as_ref().is_none_or(|b| gain > b.gain) {
                best = Some(SplitChoice {
                    feature,
                    threshold,
                    gain,
                });
            }
        }
    }
    best
}

fn grow(
    nodes: &mut Vec<TreeNode>,
    xs: &[[f64; RAW_DIM]],
    target: &[f64],
    idx: Vec<usize>,
    depth: u32,
    params: &TreesParams,
) {
    let mean = idx.iter().map(|&i| target[i]).sum::<f64>() / idx.len() as f64;
    if depth >= params.max_depth || idx.len() < 2 * params.min_leaf {
        nodes.push(TreeNode::Leaf(mean));
        return;
    }
    let Some(split) = best_split(xs, target, &idx, params.min_leaf) else {
        nodes.push(TreeNode::Leaf(mean));
        return;
    };
    let (left, right): (Vec<usize>, Vec<usize>) = idx
        .into_iter()
        .partition(|&i| xs[i][split.feature] < split.threshold);
    let at = nodes.len();
    nodes.push(TreeNode::Split {
        feature: split.feature,
        threshold: split.threshold,
        right: 0,
    });
    grow(nodes, xs, target, left, depth + 1, params);
    let right_at = nodes.len();
    if let TreeNode::Split { right: r, .. } = &mut nodes[at] {
        *r = right_at;
    }
    grow(nodes, xs, target, right, depth + 1, params);
}

pub(super) fn fit(samples: &[(FeatureVector, f64)], params: &TreesParams) -> Result<TreesModel> {
    params.validate()?;
    if samples.len() < 2 {
        return Err(Error::learner(format!(
            "need at least 2 samples, got {}",
            samples.len()
        )));
    }
    let n = samples.len();
    let xs: Vec<[f64; RAW_DIM]> = samples.iter().map(|(x, _)| x.raw).collect();
    let ys: Vec<f64> = samples.iter().map(|(_, y)| *y).collect();
    let base = ys.iter().sum::<f64>() / n as f64;
    let mut fitted = vec![base; n];
    let mut trees = Vec::with_capacity(params.n_trees);
    let mut train_rmse = Vec::with_capacity(params.n_trees);
    for _ in 0..params.n_trees {
        let residual: Vec<f64> = (0..n).map(|i| ys[i] - fitted[i]).collect();
        let mut nodes = Vec::new();
        grow(&mut nodes, &xs, &residual, (0..n).collect(), 0, params);
        let tree = RegressionTree { nodes };
        for i in 0..n {
            fitted[i] += params.learning_rate * tree.eval(&xs[i]);
        }
        let sse: f64 = (0..n).map(|i| (ys[i] - fitted[i]).powi(2)).sum();
        train_rmse.push((sse / n as f64).sqrt());
        trees.push(tree);
    }
    Ok(TreesModel {
        base,
        learning_rate: params.learning_rate,
        trees,
        train_rmse,
    })
}
