//! Gaussian naive Bayes.

use serde::{Deserialize, Serialize};

use super::{check_dims, softmax_spread, Classifier, Learner, TrainingSet};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GnbConfig {
    pub var_floor: f64,
    /// Leave out classes with fewer than two samples instead of failing.
    pub skip_sparse_classes: bool,
}

impl Default for GnbConfig {
    fn default() -> Self {
        Self {
            var_floor: 1e-9,
            skip_sparse_classes: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GnbModel {
    pub n_features: usize,
    pub n_classes: usize,
    pub classes: Vec<usize>,
    pub priors: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub variances: Vec<Vec<f64>>,
}

pub fn fit_gnb(train: &TrainingSet, config: &GnbConfig) -> Result<GnbModel> {
    let counts = train.class_counts();
    let mut classes = Vec::new();
    for c in train.present_classes() {
        if counts[c] < 2 {
            if config.skip_sparse_classes {
                continue;
            }
            return Err(Error::arg(
                "train",
                format!("class {c} has {} sample(s); naive Bayes needs at least 2", counts[c]),
            ));
        }
        classes.push(c);
    }
    if classes.is_empty() {
        return Err(Error::arg("train", "no class with at least 2 samples"));
    }
    let d = train.dim();
    let kept: usize = classes.iter().map(|&c| counts[c]).sum();
    let mut priors = Vec::new();
    let mut means = Vec::new();
    let mut variances = Vec::new();
    for &c in &classes {
        let rows: Vec<&Vec<f64>> = train
            .features
            .iter()
            .zip(&train.labels)
            .filter(|(_, &l)| l == c)
            .map(|(r, _)| r)
            .collect();
        let n = rows.len() as f64;
        let mean: Vec<f64> = (0..d).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n).collect();
        let var: Vec<f64> = (0..d)
            .map(|j| {
                let v = rows.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / n;
                v.max(config.var_floor)
            })
            .collect();
        priors.push(n / kept as f64);
        means.push(mean);
        variances.push(var);
    }
    Ok(GnbModel {
        n_features: d,
        n_classes: train.n_classes,
        classes,
        priors,
        means,
        variances,
    })
}

impl GnbModel {
    pub fn log_joint(&self, x: &[f64]) -> Vec<f64> {
        let ln2pi = (2.0 * std::f64::consts::PI).ln();
        self.priors
            .iter()
            .zip(&self.means)
            .zip(&self.variances)
            .map(|((p, m), v)| {
                p.ln()
                    + x.iter()
                        .zip(m)
                        .zip(v)
                        .map(|((xi, mi), vi)| -0.5 * (ln2pi + vi.ln()) - (xi - mi).powi(2) / (2.0 * vi))
                        .sum::<f64>()
            })
            .collect()
    }
}

impl Classifier for GnbModel {
    fn kind(&self) -> &'static str {
        "gnb"
    }

    fn n_features(&self) -> usize {
        self.n_features
    }

    fn n_classes(&self) -> usize {
        self.n_classes
    }

    fn scores(&self, x: &[f64]) -> Vec<f64> {
        softmax_spread(&self.classes, &self.log_joint(x), self.n_classes)
    }

    fn param_count(&self) -> usize {
        2 * self.n_features * self.classes.len() + self.classes.len()
    }

    fn to_json(&self) -> Result<serde_json::Value> {
        Ok(serde_json::to_value(self)?)
    }
}

pub struct GnbLearner(pub GnbConfig);

impl Learner for GnbLearner {
    fn name(&self) -> &'static str {
        "gnb"
    }

    fn fit(&self, train: &TrainingSet) -> Result<Box<dyn Classifier>> {
        Ok(Box::new(fit_gnb(train, &self.0)?))
    }

    fn decode(&self, model: serde_json::Value) -> Result<Box<dyn Classifier>> {
        let m: GnbModel = serde_json::from_value(model)?;
        let k = m.classes.len();
        if m.priors.len() != k || m.means.len() != k || m.variances.len() != k {
            return Err(Error::schema("priors", "one entry per class expected"));
        }
        check_dims(&m.means, m.n_features)?;
        check_dims(&m.variances, m.n_features)?;
        if m.variances.iter().flatten().any(|v| !(*v > 0.0)) {
            return Err(Error::schema("variances", "must be positive"));
        }
        Ok(Box::new(m))
    }
}
