//! k-nearest neighbours over Euclidean distance.

use serde::{Deserialize, Serialize};

use super::{check_dims, spread, Classifier, Learner, TrainingSet};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KnnConfig {
    pub k: usize,
}

impl Default for KnnConfig {
    fn default() -> Self {
        Self { k: 5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KnnModel {
    pub k: usize,
    pub n_features: usize,
    pub n_classes: usize,
    pub samples: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
}

pub fn fit_knn(train: &TrainingSet, config: &KnnConfig) -> Result<KnnModel> {
    if config.k == 0 || config.k > train.len() {
        return Err(Error::arg(
            "k",
            format!("{} neighbours requested from {} samples", config.k, train.len()),
        ));
    }
    Ok(KnnModel {
        k: config.k,
        n_features: train.dim(),
        n_classes: train.n_classes,
        samples: train.features.clone(),
        labels: train.labels.clone(),
    })
}

impl KnnModel {
    /// Indices of the k nearest samples; equal distances keep the lower index.
    pub fn neighbours(&self, x: &[f64]) -> Vec<usize> {
        let mut d: Vec<(f64, usize)> = self
            .samples
            .iter()
            .enumerate()
            .map(|(i, s)| (s.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>(), i))
            .collect();
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if self.k < d.len() {
            d.select_nth_unstable_by(self.k - 1, cmp);
            d.truncate(self.k);
        }
        d.sort_by(cmp);
        d.into_iter().map(|(_, i)| i).collect()
    }
}

impl Classifier for KnnModel {
    fn kind(&self) -> &'static str {
        "knn"
    }

    fn n_features(&self) -> usize {
        self.n_features
    }

    fn n_classes(&self) -> usize {
        self.n_classes
    }

    fn scores(&self, x: &[f64]) -> Vec<f64> {
        let mut votes = vec![0.0; self.n_classes];
        for i in self.neighbours(x) {
            votes[self.labels[i]] += 1.0;
        }
        let classes: Vec<usize> = (0..self.n_classes).collect();
        spread(&classes, &votes, self.n_classes)
    }

    fn param_count(&self) -> usize {
        0
    }

    fn stored_samples(&self) -> usize {
        self.samples.len()
    }

    fn to_json(&self) -> Result<serde_json::Value> {
        Ok(serde_json::to_value(self)?)
    }
}

pub struct KnnLearner(pub KnnConfig);

impl Learner for KnnLearner {
    fn name(&self) -> &'static str {
        "knn"
    }

    fn fit(&self, train: &TrainingSet) -> Result<Box<dyn Classifier>> {
        Ok(Box::new(fit_knn(train, &self.0)?))
    }

    fn decode(&self, model: serde_json::Value) -> Result<Box<dyn Classifier>> {
        let m: KnnModel = serde_json::from_value(model)?;
        check_dims(&m.samples, m.n_features)?;
        if m.samples.len() != m.labels.len() || m.k == 0 || m.k > m.samples.len() {
            return Err(Error::schema("samples", "inconsistent stored samples"));
        }
        if m.labels.iter().any(|&c| c >= m.n_classes) {
            return Err(Error::schema("labels", "class id outside n_classes"));
        }
        Ok(Box::new(m))
    }
}
