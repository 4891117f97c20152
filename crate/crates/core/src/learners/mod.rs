//! The classifier suite.
//!
//! Every learning algorithm implements [`Learner`] and produces a boxed
//! [`Classifier`]. A [`LearnerRegistry`] maps names to learners so the set of
//! methods can be chosen from configuration at runtime, and decodes saved
//! models back through the learner that wrote them.

mod gnb;
mod knn;
mod logistic;
mod svm;
mod tree;

use std::fmt::Debug;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use gnb::{fit_gnb, GnbConfig, GnbLearner, GnbModel};
pub use knn::{fit_knn, KnnConfig, KnnLearner, KnnModel};
pub use logistic::{fit_logistic, logistic_objective, LogisticConfig, LogisticLearner, LogisticModel};
pub use svm::{fit_svm, SvmConfig, SvmLearner, SvmModel};
pub use tree::{fit_tree, TreeConfig, TreeLearner, TreeModel, TreeNode};

/// Model file format version written into every envelope.
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    /// Size of the global class table; labels index into it.
    pub n_classes: usize,
}

impl TrainingSet {
    pub fn new(features: Vec<Vec<f64>>, labels: Vec<usize>, n_classes: usize) -> Result<Self> {
        if features.is_empty() {
            return Err(Error::arg("train", "empty training set"));
        }
        if features.len() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: features.len(),
                got: labels.len(),
            });
        }
        let d = features[0].len();
        for row in &features {
            if row.len() != d {
                return Err(Error::DimensionMismatch { expected: d, got: row.len() });
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::arg("train", "non-finite feature"));
            }
        }
        if let Some(bad) = labels.iter().find(|&&l| l >= n_classes) {
            return Err(Error::arg("train", format!("class {bad} outside 0..{n_classes}")));
        }
        Ok(Self { features, labels, n_classes })
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features[0].len()
    }

    /// Classes present, ascending.
    pub fn present_classes(&self) -> Vec<usize> {
        let mut seen = vec![false; self.n_classes];
        for &l in &self.labels {
            seen[l] = true;
        }
        (0..self.n_classes).filter(|&c| seen[c]).collect()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreVector {
    pub scores: Vec<f64>,
    /// Entries are non-negative and sum to one.
    pub probability: bool,
}

impl ScoreVector {
    pub fn argmax(&self) -> usize {
        argmax(&self.scores)
    }
}

/// Index of the largest entry, lowest index on ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Normalizes non-negative weights over `classes` into a full-length probability vector.
pub(crate) fn spread(classes: &[usize], weights: &[f64], n_classes: usize) -> Vec<f64> {
    let total: f64 = weights.iter().sum();
    let mut out = vec![0.0; n_classes];
    for (&c, &w) in classes.iter().zip(weights) {
        out[c] = if total > 0.0 && total.is_finite() {
            w / total
        } else {
            1.0 / classes.len() as f64
        };
    }
    out
}

/// Softmax over `values`, placed at `classes` in a full-length vector.
pub(crate) fn softmax_spread(classes: &[usize], values: &[f64], n_classes: usize) -> Vec<f64> {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = values.iter().map(|v| (v - max).exp()).collect();
    spread(classes, &exp, n_classes)
}

pub trait Classifier: Send + Sync + Debug {
    fn kind(&self) -> &'static str;
    fn n_features(&self) -> usize;
    /// Size of the global class table.
    fn n_classes(&self) -> usize;
    /// Probability-like scores over the full class table, without dimension checks.
    fn scores(&self, features: &[f64]) -> Vec<f64>;
    fn param_count(&self) -> usize;
    fn stored_samples(&self) -> usize {
        0
    }
    fn to_json(&self) -> Result<serde_json::Value>;
}

impl dyn Classifier {
    pub fn predict_scores(&self, features: &[f64]) -> Result<ScoreVector> {
        if features.len() != self.n_features() {
            return Err(Error::DimensionMismatch {
                expected: self.n_features(),
                got: features.len(),
            });
        }
        Ok(ScoreVector {
            scores: self.scores(features),
            probability: true,
        })
    }

    pub fn predict(&self, features: &[f64]) -> Result<usize> {
        Ok(self.predict_scores(features)?.argmax())
    }

    pub fn envelope(&self) -> Result<ModelEnvelope> {
        Ok(ModelEnvelope {
            kind: self.kind().to_string(),
            version: MODEL_VERSION,
            model: self.to_json()?,
        })
    }
}

/// A trainable method, registered under a unique name.
pub trait Learner: Send + Sync {
    fn name(&self) -> &'static str;
    fn fit(&self, train: &TrainingSet) -> Result<Box<dyn Classifier>>;
    fn decode(&self, model: serde_json::Value) -> Result<Box<dyn Classifier>>;
}

/// Serialized model tagged with its kind and format version.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelEnvelope {
    pub kind: String,
    pub version: u32,
    pub model: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct LearnerConfigs {
    pub logistic: LogisticConfig,
    pub svm: SvmConfig,
    pub tree: TreeConfig,
    pub knn: KnnConfig,
    pub gnb: GnbConfig,
}

#[derive(Default)]
pub struct LearnerRegistry {
    learners: Vec<Box<dyn Learner>>,
}

impl LearnerRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// The five built-in methods, configured from `configs`.
    pub fn standard(configs: &LearnerConfigs) -> Self {
        let mut r = Self::new();
        r.register(Box::new(SvmLearner(configs.svm.clone())));
        r.register(Box::new(LogisticLearner(configs.logistic.clone())));
        r.register(Box::new(TreeLearner(configs.tree.clone())));
        r.register(Box::new(KnnLearner(configs.knn.clone())));
        r.register(Box::new(GnbLearner(configs.gnb.clone())));
        r
    }

    /// Adds a learner, replacing any existing one of the same name.
    pub fn register(&mut self, learner: Box<dyn Learner>) {
        if let Some(slot) = self.learners.iter_mut().find(|l| l.name() == learner.name()) {
            *slot = learner;
        } else {
            self.learners.push(learner);
        }
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.learners.iter().map(|l| l.name()).collect()
    }

    pub fn get(&self, name: &str) -> Result<&dyn Learner> {
        self.learners
            .iter()
            .find(|l| l.name() == name)
            .map(|b| b.as_ref())
            .ok_or_else(|| Error::arg("methods", format!("no learner named `{name}`")))
    }

    /// Learners for the given names, in the given order.
    pub fn select(&self, names: &[String]) -> Result<Vec<&dyn Learner>> {
        names.iter().map(|n| self.get(n)).collect()
    }

    pub fn decode(&self, envelope: ModelEnvelope) -> Result<Box<dyn Classifier>> {
        if envelope.version != MODEL_VERSION {
            return Err(Error::schema(
                "version",
                format!("unsupported model version {}", envelope.version),
            ));
        }
        self.get(&envelope.kind)
            .map_err(|_| Error::schema("kind", format!("unknown model kind `{}`", envelope.kind)))?
            .decode(envelope.model)
    }
}

pub(crate) fn check_dims(features: &[Vec<f64>], d: usize) -> Result<()> {
    for row in features {
        if row.len() != d {
            return Err(Error::schema("features", "row length differs from n_features"));
        }
    }
    Ok(())
}
