//! One-vs-rest linear SVM trained with Pegasos-style stochastic subgradient steps.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{check_dims, softmax_spread, Classifier, Learner, TrainingSet};
use crate::error::{Error, Result};
use crate::seed::{derive_seed, rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SvmConfig {
    pub lambda: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for SvmConfig {
    fn default() -> Self {
        Self {
            lambda: 1e-3,
            epochs: 20,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SvmModel {
    pub n_features: usize,
    pub n_classes: usize,
    pub classes: Vec<usize>,
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
}

pub fn fit_svm(train: &TrainingSet, config: &SvmConfig) -> Result<SvmModel> {
    if !(config.lambda > 0.0) {
        return Err(Error::arg("lambda", "must be positive"));
    }
    let classes = train.present_classes();
    if classes.len() < 2 {
        return Err(Error::arg("train", "one-vs-rest SVM needs at least 2 classes"));
    }
    let d = train.dim();
    let n = train.len();
    let mut weights = Vec::with_capacity(classes.len());
    let mut bias = Vec::with_capacity(classes.len());
    for &c in &classes {
        let mut r = rng(derive_seed(config.seed, "svm", c as u64));
        // the bias rides along as weight `d` on a constant feature of 1
        let mut w = vec![0.0; d + 1];
        let mut order: Vec<usize> = (0..n).collect();
        let mut t = 0usize;
        for _ in 0..config.epochs {
            order.shuffle(&mut r);
            for &i in &order {
                t += 1;
                let eta = 1.0 / (config.lambda * t as f64);
                let y = if train.labels[i] == c { 1.0 } else { -1.0 };
                let x = &train.features[i];
                let margin = y * (x.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() + w[d]);
                let shrink = 1.0 - eta * config.lambda;
                for wi in w.iter_mut() {
                    *wi *= shrink;
                }
                if margin < 1.0 {
                    for (wi, a) in w.iter_mut().zip(x) {
                        *wi += eta * y * a;
                    }
                    w[d] += eta * y;
                }
            }
        }
        bias.push(w.pop().expect("bias slot"));
        weights.push(w);
    }
    Ok(SvmModel {
        n_features: d,
        n_classes: train.n_classes,
        classes,
        weights,
        bias,
    })
}

impl SvmModel {
    pub fn margins(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.bias)
            .map(|(w, b)| w.iter().zip(x).map(|(a, c)| a * c).sum::<f64>() + b)
            .collect()
    }
}

impl Classifier for SvmModel {
    fn kind(&self) -> &'static str {
        "svm"
    }

    fn n_features(&self) -> usize {
        self.n_features
    }

    fn n_classes(&self) -> usize {
        self.n_classes
    }

    fn scores(&self, x: &[f64]) -> Vec<f64> {
        softmax_spread(&self.classes, &self.margins(x), self.n_classes)
    }

    fn param_count(&self) -> usize {
        (self.n_features + 1) * self.classes.len()
    }

    fn to_json(&self) -> Result<serde_json::Value> {
        Ok(serde_json::to_value(self)?)
    }
}

pub struct SvmLearner(pub SvmConfig);

impl Learner for SvmLearner {
    fn name(&self) -> &'static str {
        "svm"
    }

    fn fit(&self, train: &TrainingSet) -> Result<Box<dyn Classifier>> {
        Ok(Box::new(fit_svm(train, &self.0)?))
    }

    fn decode(&self, model: serde_json::Value) -> Result<Box<dyn Classifier>> {
        let m: SvmModel = serde_json::from_value(model)?;
        if m.weights.len() != m.classes.len() || m.bias.len() != m.classes.len() {
            return Err(Error::schema("weights", "one row per class expected"));
        }
        check_dims(&m.weights, m.n_features)?;
        if m.classes.iter().any(|&c| c >= m.n_classes) {
            return Err(Error::schema("classes", "class id outside n_classes"));
        }
        Ok(Box::new(m))
    }
}
