//! One-vs-rest logistic regression trained by full-batch gradient descent.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{check_dims, spread, Classifier, Learner, TrainingSet};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LogisticConfig {
    pub learning_rate: f64,
    pub iterations: usize,
    pub l2: f64,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            iterations: 500,
            l2: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogisticModel {
    pub n_features: usize,
    pub n_classes: usize,
    pub classes: Vec<usize>,
    /// One weight row per entry of `classes`.
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// log(1 + e^z) without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Mean binary cross-entropy plus `l2/2·‖w‖²`, with its gradient in `(w, b)`.
pub fn logistic_objective(w: &[f64], b: f64, x: &[Vec<f64>], y: &[f64], l2: f64) -> (f64, Vec<f64>, f64) {
    let n = x.len() as f64;
    let mut loss = 0.0;
    let mut gw = vec![0.0; w.len()];
    let mut gb = 0.0;
    for (row, &t) in x.iter().zip(y) {
        let z = row.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() + b;
        // -t·log σ(z) - (1-t)·log(1-σ(z)) = softplus(z) - t·z
        loss += softplus(z) - t * z;
        let r = sigmoid(z) - t;
        for (g, a) in gw.iter_mut().zip(row) {
            *g += r * a;
        }
        gb += r;
    }
    loss /= n;
    gb /= n;
    let reg: f64 = w.iter().map(|v| v * v).sum::<f64>() * l2 / 2.0;
    for (g, wi) in gw.iter_mut().zip(w) {
        *g = *g / n + l2 * wi;
    }
    (loss + reg, gw, gb)
}

/// Gradient descent on every one-vs-rest problem at once: with a bias column
/// appended to X, each step is `W -= lr·(Xᵀ(σ(XW) − Y)/n + l2·W)`, the bias row
/// excluded from the penalty. Column j follows the same iterates as
/// [`logistic_objective`] applied to class j alone.
pub fn fit_logistic(train: &TrainingSet, config: &LogisticConfig) -> Result<LogisticModel> {
    if !(config.learning_rate > 0.0) || config.l2 < 0.0 {
        return Err(Error::arg("logistic", "learning_rate must be positive and l2 non-negative"));
    }
    let classes = train.present_classes();
    if classes.len() < 2 {
        return Err(Error::arg("train", "logistic regression needs at least 2 classes"));
    }
    let (n, d, c) = (train.len(), train.dim(), classes.len());
    let x = DMatrix::from_fn(n, d + 1, |i, j| if j < d { train.features[i][j] } else { 1.0 });
    let xt = x.transpose();
    let y = DMatrix::from_fn(n, c, |i, j| if train.labels[i] == classes[j] { 1.0 } else { 0.0 });
    let mut w = DMatrix::<f64>::zeros(d + 1, c);
    let inv_n = 1.0 / n as f64;
    for it in 0..config.iterations {
        let z = &x * &w;
        // the loss is a finite sum of softplus terms, so it is finite iff every margin is
        for j in 0..c {
            if z.column(j).iter().any(|v| !v.is_finite()) {
                return Err(Error::Divergence { class: classes[j], iteration: it });
            }
        }
        let r = z.map(sigmoid) - &y;
        let mut g = &xt * r;
        g *= inv_n;
        for j in 0..c {
            for i in 0..d {
                g[(i, j)] += config.l2 * w[(i, j)];
            }
        }
        w -= g * config.learning_rate;
    }
    for j in 0..c {
        if w.column(j).iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence { class: classes[j], iteration: config.iterations });
        }
    }
    Ok(LogisticModel {
        n_features: d,
        n_classes: train.n_classes,
        weights: (0..c).map(|j| (0..d).map(|i| w[(i, j)]).collect()).collect(),
        bias: (0..c).map(|j| w[(d, j)]).collect(),
        classes,
    })
}

impl Classifier for LogisticModel {
    fn kind(&self) -> &'static str {
        "logistic"
    }

    fn n_features(&self) -> usize {
        self.n_features
    }

    fn n_classes(&self) -> usize {
        self.n_classes
    }

    fn scores(&self, x: &[f64]) -> Vec<f64> {
        let probs: Vec<f64> = self
            .weights
            .iter()
            .zip(&self.bias)
            .map(|(w, b)| sigmoid(w.iter().zip(x).map(|(a, c)| a * c).sum::<f64>() + b))
            .collect();
        spread(&self.classes, &probs, self.n_classes)
    }

    fn param_count(&self) -> usize {
        (self.n_features + 1) * self.classes.len()
    }

    fn to_json(&self) -> Result<serde_json::Value> {
        Ok(serde_json::to_value(self)?)
    }
}

pub struct LogisticLearner(pub LogisticConfig);

impl Learner for LogisticLearner {
    fn name(&self) -> &'static str {
        "logistic"
    }

    fn fit(&self, train: &TrainingSet) -> Result<Box<dyn Classifier>> {
        Ok(Box::new(fit_logistic(train, &self.0)?))
    }

    fn decode(&self, model: serde_json::Value) -> Result<Box<dyn Classifier>> {
        let m: LogisticModel = serde_json::from_value(model)?;
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


#[cfg(test)]
mod matrix_form {
    use super::*;

    /// Per-class descent on `logistic_objective`, the reference for the joint update.
    fn per_class(train: &TrainingSet, cfg: &LogisticConfig, c: usize) -> (Vec<f64>, f64) {
        let y: Vec<f64> = train.labels.iter().map(|&l| f64::from(u8::from(l == c))).collect();
        let mut w = vec![0.0; train.dim()];
        let mut b = 0.0;
        for _ in 0..cfg.iterations {
            let (_, gw, gb) = logistic_objective(&w, b, &train.features, &y, cfg.l2);
            for (wi, g) in w.iter_mut().zip(&gw) {
                *wi -= cfg.learning_rate * g;
            }
            b -= cfg.learning_rate * gb;
        }
        (w, b)
    }

    #[test]
    fn joint_update_matches_per_class_descent() {
        let rows: Vec<Vec<f64>> = (0..30)
            .map(|i| vec![(i as f64 * 0.37).sin(), (i as f64 * 0.11).cos(), (i % 7) as f64 / 7.0])
            .collect();
        let labels: Vec<usize> = (0..30).map(|i| (i * 5 + i / 4) % 3).collect();
        let t = TrainingSet::new(rows, labels, 4).unwrap();
        let cfg = LogisticConfig { learning_rate: 0.7, iterations: 40, l2: 0.01 };
        let m = fit_logistic(&t, &cfg).unwrap();
        assert_eq!(m.classes, vec![0, 1, 2]);
        for (j, &c) in m.classes.iter().enumerate() {
            let (w, b) = per_class(&t, &cfg, c);
            for (a, e) in m.weights[j].iter().zip(&w) {
                assert!((a - e).abs() < 1e-12, "{a} vs {e}");
            }
            assert!((m.bias[j] - b).abs() < 1e-12);
        }
    }
}
