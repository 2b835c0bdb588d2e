//! Small CART regression trees used as surrogates of the risk model.

use serde::{Deserialize, Serialize};

use super::strata::{partition, N_STRATA};
use crate::cohort::CohortTable;
use crate::error::{Error, Result};
use crate::model::RiskScorer;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TreeConfig {
    pub max_depth: usize,
    pub min_samples_leaf: usize,
}

impl Default for TreeConfig {
    fn default() -> Self {
        TreeConfig { max_depth: 3, min_samples_leaf: 5 }
    }
}

/// A regression tree. Rows with `x[feature] <= threshold` go left.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged, bound = "T: Scalar")]
pub enum TreeNode<T> {
    Split {
        feature: usize,
        feature_name: String,
        threshold: T,
        n_samples: usize,
        left: Box<TreeNode<T>>,
        right: Box<TreeNode<T>>,
    },
    Leaf {
        leaf_value: T,
        n_samples: usize,
    },
}

impl<T: Scalar> TreeNode<T> {
    pub fn predict(&self, x: &[T]) -> T {
        let mut node = self;
        loop {
            match node {
                TreeNode::Leaf { leaf_value, .. } => return *leaf_value,
                TreeNode::Split { feature, threshold, left, right, .. } => {
                    node = if x[*feature] <= *threshold { left } else { right };
                }
            }
        }
    }

    /// Number of split levels on the longest root-to-leaf path.
    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    pub fn n_leaves(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 1,
            TreeNode::Split { left, right, .. } => left.n_leaves() + right.n_leaves(),
        }
    }

    pub fn n_samples(&self) -> usize {
        match self {
            TreeNode::Leaf { n_samples, .. } | TreeNode::Split { n_samples, .. } => *n_samples,
        }
    }

    /// Leaves in left-to-right order.
    pub fn leaves(&self) -> Vec<(T, usize)> {
        let mut out = Vec::new();
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves(&self, out: &mut Vec<(T, usize)>) {
        match self {
            TreeNode::Leaf { leaf_value, n_samples } => out.push((*leaf_value, *n_samples)),
            TreeNode::Split { left, right, .. } => {
                left.collect_leaves(out);
                right.collect_leaves(out);
            }
        }
    }
}

struct BestSplit<T> {
    feature: usize,
    threshold: T,
    gain: f64,
}

/// Fits a variance-reduction regression tree to `(rows, targets)`.
pub fn fit_tree<T: Scalar>(
    rows: &[Vec<T>],
    targets: &[T],
    names: &[&str],
    config: &TreeConfig,
) -> Result<TreeNode<T>> {
    if rows.is_empty() || rows.len() != targets.len() {
        return Err(Error::InvalidInput("tree needs matching, non-empty rows and targets".into()));
    }
    if config.min_samples_leaf == 0 {
        return Err(Error::InvalidConfig("min_samples_leaf must be positive".into()));
    }
    let p = rows[0].len();
    if names.len() != p {
        return Err(Error::InvalidInput(format!("{} feature names for {p} columns", names.len())));
    }
    let idx: Vec<usize> = (0..rows.len()).collect();
    Ok(grow(rows, targets, names, config, idx, 0))
}

fn grow<T: Scalar>(
    rows: &[Vec<T>],
    y: &[T],
    names: &[&str],
    config: &TreeConfig,
    idx: Vec<usize>,
    depth: usize,
) -> TreeNode<T> {
    let n = idx.len();
    let mean = idx.iter().map(|&i| y[i].as_f64()).sum::<f64>() / n as f64;
    let leaf = TreeNode::Leaf { leaf_value: T::lit(mean), n_samples: n };
    if depth >= config.max_depth || n < 2 * config.min_samples_leaf {
        return leaf;
    }
    let Some(best) = best_split(rows, y, config.min_samples_leaf, &idx) else {
        return leaf;
    };
    let (l, r): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| rows[i][best.feature] <= best.threshold);
    TreeNode::Split {
        feature: best.feature,
        feature_name: names[best.feature].to_owned(),
        threshold: best.threshold,
        n_samples: n,
        left: Box::new(grow(rows, y, names, config, l, depth + 1)),
        right: Box::new(grow(rows, y, names, config, r, depth + 1)),
    }
}

/// Exhaustive search; ties go to the lower feature index, then the lower threshold.
fn best_split<T: Scalar>(rows: &[Vec<T>], y: &[T], min_leaf: usize, idx: &[usize]) -> Option<BestSplit<T>> {
    let n = idx.len();
    // centre on the node mean so sums of squares do not cancel catastrophically
    let centre = idx.iter().map(|&i| y[i].as_f64()).sum::<f64>() / n as f64;
    let yc = |i: usize| y[i].as_f64() - centre;
    let total: f64 = idx.iter().map(|&i| yc(i)).sum();
    let total_sq: f64 = idx.iter().map(|&i| yc(i).powi(2)).sum();
    let parent_sse = total_sq - total * total / n as f64;
    let scale = idx.iter().map(|&i| y[i].as_f64().abs()).fold(0.0, f64::max);
    if parent_sse <= n as f64 * (1e-12 * scale).powi(2) {
        return None;
    }
    let floor = 1e-12 * parent_sse;
    let mut best: Option<BestSplit<T>> = None;
    let mut order = idx.to_vec();
    for f in 0..rows[idx[0]].len() {
        order.sort_by(|&a, &b| rows[a][f].partial_cmp(&rows[b][f]).unwrap_or(std::cmp::Ordering::Equal));
        let (mut s, mut sq) = (0.0, 0.0);
        for k in 0..n - 1 {
            let v = yc(order[k]);
            s += v;
            sq += v * v;
            let n_left = k + 1;
            let (lo, hi) = (rows[order[k]][f], rows[order[k + 1]][f]);
            if n_left < min_leaf || n - n_left < min_leaf || lo >= hi {
                continue;
            }
            let n_right = (n - n_left) as f64;
            let sse_l = sq - s * s / n_left as f64;
            let sse_r = (total_sq - sq) - (total - s).powi(2) / n_right;
            let gain = parent_sse - sse_l - sse_r;
            if gain > floor && best.as_ref().is_none_or(|b| gain > b.gain * (1.0 + 1e-12)) {
                best = Some(BestSplit { feature: f, threshold: (lo + hi) * T::lit(0.5), gain });
            }
        }
    }
    best
}

/// One tree surrogate per risk quintile.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct StratumTree<T> {
    pub stratum_index: usize,
    pub n_train: usize,
    pub tree: TreeNode<T>,
    /// Mean squared error against the model's predictions in the stratum.
    pub fidelity: T,
}

pub fn fit_stratified_trees<T: Scalar>(
    scorer: &dyn RiskScorer<T>,
    cohort: &CohortTable<T>,
    config: &TreeConfig,
) -> Result<Vec<StratumTree<T>>> {
    let rows = cohort.dense()?;
    let (preds, groups) = partition(scorer, &rows)?;
    let names: Vec<&str> = cohort.schema().names().collect();
    debug_assert_eq!(groups.len(), N_STRATA);
    groups
        .iter()
        .enumerate()
        .map(|(s, idx)| {
            if idx.is_empty() {
                return Err(Error::EmptyStratum(s));
            }
            let xs: Vec<Vec<T>> = idx.iter().map(|&i| rows[i].clone()).collect();
            let ys: Vec<T> = idx.iter().map(|&i| preds[i]).collect();
            let tree = fit_tree(&xs, &ys, &names, config)?;
            let mse = xs.iter().zip(&ys).map(|(x, &y)| (tree.predict(x) - y).powi(2)).sum::<T>()
                / T::count(xs.len());
            Ok(StratumTree { stratum_index: s, n_train: idx.len(), tree, fidelity: mse })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(p: usize) -> Vec<String> {
        (0..p).map(|j| format!("f{j}")).collect()
    }

    #[test]
    fn recovers_single_step() {
        let rows: Vec<Vec<f64>> = (0..40).map(|i| vec![(i % 7) as f64, i as f64]).collect();
        let y: Vec<f64> = rows.iter().map(|r| if r[1] < 20.0 { 0.1 } else { 0.7 }).collect();
        let n = names(2);
        let nr: Vec<&str> = n.iter().map(String::as_str).collect();
        let t = fit_tree(&rows, &y, &nr, &TreeConfig::default()).unwrap();
        match &t {
            TreeNode::Split { feature, threshold, left, right, .. } => {
                assert_eq!(*feature, 1);
                assert_eq!(*threshold, 19.5);
                assert!(matches!(**left, TreeNode::Leaf { leaf_value, n_samples: 20 } if (leaf_value - 0.1).abs() < 1e-12));
                assert!(matches!(**right, TreeNode::Leaf { leaf_value, n_samples: 20 } if (leaf_value - 0.7).abs() < 1e-12));
            }
            other => panic!("expected split, got {other:?}"),
        }
    }

    #[test]
    fn constant_target_is_single_leaf() {
        let rows: Vec<Vec<f64>> = (0..30).map(|i| vec![i as f64]).collect();
        let t = fit_tree(&rows, &vec![0.3; 30], &["x"], &TreeConfig::default()).unwrap();
        assert_eq!(t.n_leaves(), 1);
    }

    #[test]
    fn respects_depth_and_leaf_size() {
        let rows: Vec<Vec<f64>> = (0..200).map(|i| vec![i as f64, ((i * 37) % 11) as f64]).collect();
        let y: Vec<f64> = rows.iter().map(|r| (r[0] * 0.13).sin() + 0.1 * r[1]).collect();
        let cfg = TreeConfig::default();
        let t = fit_tree(&rows, &y, &["a", "b"], &cfg).unwrap();
        assert!(t.depth() <= 3);
        assert!(t.leaves().iter().all(|&(_, n)| n >= cfg.min_samples_leaf));
        assert_eq!(t.leaves().iter().map(|l| l.1).sum::<usize>(), 200);
    }

    #[test]
    fn json_shape() {
        let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64]).collect();
        let y: Vec<f64> = (0..20).map(|i| if i < 10 { 0.0 } else { 1.0 }).collect();
        let t = fit_tree(&rows, &y, &["x"], &TreeConfig::default()).unwrap();
        let v = serde_json::to_value(&t).unwrap();
        assert_eq!(v["feature_name"], "x");
        assert_eq!(v["left"]["leaf_value"], 0.0);
        let back: TreeNode<f64> = serde_json::from_value(v).unwrap();
        assert_eq!(back, t);
    }
}
