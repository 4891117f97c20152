//! CART classification tree with Gini impurity.

use serde::{Deserialize, Serialize};

use super::{spread, Classifier, Learner, TrainingSet};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TreeConfig {
    pub max_depth: usize,
    pub min_samples_leaf: usize,
}

impl Default for TreeConfig {
    fn default() -> Self {
        Self {
            max_depth: 8,
            min_samples_leaf: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreeNode {
    Leaf {
        /// Training sample count per class id.
        counts: Vec<usize>,
    },
    Split {
        feature: usize,
        /// Samples with `x[feature] <= threshold` go left.
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
}

impl TreeNode {
    fn internal_and_leaves(&self) -> (usize, usize) {
        match self {
            TreeNode::Leaf { .. } => (0, 1),
            TreeNode::Split { left, right, .. } => {
                let (li, ll) = left.internal_and_leaves();
                let (ri, rl) = right.internal_and_leaves();
                (li + ri + 1, ll + rl)
            }
        }
    }

    fn leaf_for(&self, x: &[f64]) -> &[usize] {
        let mut node = self;
        loop {
            match node {
                TreeNode::Leaf { counts } => return counts,
                TreeNode::Split { feature, threshold, left, right } => {
                    node = if x[*feature] <= *threshold { left } else { right };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreeModel {
    pub n_features: usize,
    pub n_classes: usize,
    pub root: TreeNode,
}

fn gini(counts: &[usize], total: usize) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let t = total as f64;
    1.0 - counts.iter().map(|&c| (c as f64 / t).powi(2)).sum::<f64>()
}

const GAIN_EPS: f64 = 1e-12;

struct Builder<'a> {
    train: &'a TrainingSet,
    config: &'a TreeConfig,
}

impl Builder<'_> {
    fn counts(&self, idx: &[usize]) -> Vec<usize> {
        let mut c = vec![0; self.train.n_classes];
        for &i in idx {
            c[self.train.labels[i]] += 1;
        }
        c
    }

    fn grow(&self, idx: Vec<usize>, depth: usize) -> TreeNode {
        let counts = self.counts(&idx);
        if depth >= self.config.max_depth || counts.iter().filter(|&&c| c > 0).count() <= 1 {
            return TreeNode::Leaf { counts };
        }
        match self.best_split(&idx, &counts) {
            None => TreeNode::Leaf { counts },
            Some((feature, threshold)) => {
                let (l, r): (Vec<usize>, Vec<usize>) = idx
                    .into_iter()
                    .partition(|&i| self.train.features[i][feature] <= threshold);
                TreeNode::Split {
                    feature,
                    threshold,
                    left: Box::new(self.grow(l, depth + 1)),
                    right: Box::new(self.grow(r, depth + 1)),
                }
            }
        }
    }

    /// Best Gini split; ties keep the lowest feature, then the lowest threshold.
    fn best_split(&self, idx: &[usize], counts: &[usize]) -> Option<(usize, f64)> {
        let n = idx.len();
        let min_leaf = self.config.min_samples_leaf.max(1);
        if n < 2 * min_leaf {
            return None;
        }
        let parent = gini(counts, n);
        let mut best: Option<(f64, usize, f64)> = None;
        let mut sorted = idx.to_vec();
        for f in 0..self.train.dim() {
            let x = |i: usize| self.train.features[i][f];
            sorted.sort_by(|&a, &b| x(a).total_cmp(&x(b)).then(a.cmp(&b)));
            let mut left = vec![0usize; counts.len()];
            for pos in 0..n - 1 {
                left[self.train.labels[sorted[pos]]] += 1;
                let nl = pos + 1;
                let nr = n - nl;
                let (lo, hi) = (x(sorted[pos]), x(sorted[pos + 1]));
                if lo == hi || nl < min_leaf || nr < min_leaf {
                    continue;
                }
                let right: Vec<usize> = counts.iter().zip(&left).map(|(c, l)| c - l).collect();
                let child = (nl as f64 * gini(&left, nl) + nr as f64 * gini(&right, nr)) / n as f64;
                let gain = parent - child;
                let threshold = lo + (hi - lo) / 2.0;
                let better = match best {
                    None => gain > GAIN_EPS,
                    Some((g, _, _)) => gain > g + GAIN_EPS,
                };
                if better {
                    best = Some((gain, f, threshold));
                }
            }
        }
        best.map(|(_, f, t)| (f, t))
    }
}

pub fn fit_tree(train: &TrainingSet, config: &TreeConfig) -> Result<TreeModel> {
    if train.len() < config.min_samples_leaf {
        return Err(Error::arg("train", "fewer samples than min_samples_leaf"));
    }
    let b = Builder { train, config };
    Ok(TreeModel {
        n_features: train.dim(),
        n_classes: train.n_classes,
        root: b.grow((0..train.len()).collect(), 0),
    })
}

impl TreeModel {
    pub fn internal_nodes(&self) -> usize {
        self.root.internal_and_leaves().0
    }

    pub fn leaves(&self) -> usize {
        self.root.internal_and_leaves().1
    }
}

impl Classifier for TreeModel {
    fn kind(&self) -> &'static str {
        "tree"
    }

    fn n_features(&self) -> usize {
        self.n_features
    }

    fn n_classes(&self) -> usize {
        self.n_classes
    }

    fn scores(&self, x: &[f64]) -> Vec<f64> {
        let counts = self.root.leaf_for(x);
        let classes: Vec<usize> = (0..self.n_classes).collect();
        let w: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
        spread(&classes, &w, self.n_classes)
    }

    fn param_count(&self) -> usize {
        let (internal, leaves) = self.root.internal_and_leaves();
        2 * internal + leaves
    }

    fn to_json(&self) -> Result<serde_json::Value> {
        Ok(serde_json::to_value(self)?)
    }
}

pub struct TreeLearner(pub TreeConfig);

fn validate_node(node: &TreeNode, d: usize, k: usize) -> Result<()> {
    match node {
        TreeNode::Leaf { counts } => {
            if counts.len() != k || counts.iter().all(|&c| c == 0) {
                return Err(Error::schema("counts", "leaf needs one nonzero count vector per class table"));
            }
            Ok(())
        }
        TreeNode::Split { feature, threshold, left, right } => {
            if *feature >= d || !threshold.is_finite() {
                return Err(Error::schema("feature", "split feature out of range"));
            }
            validate_node(left, d, k)?;
            validate_node(right, d, k)
        }
    }
}

impl Learner for TreeLearner {
    fn name(&self) -> &'static str {
        "tree"
    }

    fn fit(&self, train: &TrainingSet) -> Result<Box<dyn Classifier>> {
        Ok(Box::new(fit_tree(train, &self.0)?))
    }

    fn decode(&self, model: serde_json::Value) -> Result<Box<dyn Classifier>> {
        let m: TreeModel = serde_json::from_value(model)?;
        validate_node(&m.root, m.n_features, m.n_classes)?;
        Ok(Box::new(m))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pure_input_is_one_leaf() {
        let t = TrainingSet::new(vec![vec![0.0], vec![1.0], vec![2.0]], vec![1, 1, 1], 2).unwrap();
        let m = fit_tree(&t, &TreeConfig::default()).unwrap();
        assert_eq!(m.param_count(), 1);
    }

    #[test]
    fn single_gap_split() {
        let t = TrainingSet::new(vec![vec![0.0], vec![1.0], vec![10.0], vec![11.0]], vec![0, 0, 1, 1], 2).unwrap();
        let m = fit_tree(&t, &TreeConfig { max_depth: 1, min_samples_leaf: 1 }).unwrap();
        match &m.root {
            TreeNode::Split { feature, threshold, .. } => {
                assert_eq!(*feature, 0);
                assert!(*threshold > 1.0 && *threshold < 10.0);
            }
            _ => panic!("expected a split"),
        }
        assert_eq!(m.internal_nodes(), 1);
        let m: &dyn Classifier = &m;
        for (x, &y) in t.features.iter().zip(&t.labels) {
            assert_eq!(m.predict(x).unwrap(), y);
        }
    }

    #[test]
    fn depth_zero_is_majority_stump() {
        let t = TrainingSet::new(vec![vec![0.0], vec![1.0], vec![2.0]], vec![0, 1, 1], 2).unwrap();
        let m = fit_tree(&t, &TreeConfig { max_depth: 0, min_samples_leaf: 1 }).unwrap();
        assert_eq!(m.leaves(), 1);
        let m: &dyn Classifier = &m;
        assert_eq!(m.predict(&[0.0]).unwrap(), 1);
    }

    #[test]
    fn equal_gain_prefers_lowest_feature() {
        // both features separate the classes perfectly
        let t = TrainingSet::new(
            vec![vec![0.0, 5.0], vec![1.0, 6.0], vec![2.0, 7.0], vec![3.0, 8.0]],
            vec![0, 0, 1, 1],
            2,
        )
        .unwrap();
        let m = fit_tree(&t, &TreeConfig { max_depth: 3, min_samples_leaf: 1 }).unwrap();
        assert!(matches!(m.root, TreeNode::Split { feature: 0, .. }));
    }
}
