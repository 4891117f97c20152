//! Weighted vote fusion, the entropy-based confidence index, ROC analysis
//! and the confidence-threshold decision.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learners::argmax;

#[derive(Debug, Clone, PartialEq)]
pub struct VotePanel {
    /// `votes[n][m]` is classifier m's class for sample n.
    pub votes: Vec<Vec<usize>>,
    /// One positive weight per classifier, summing to one.
    pub weights: Vec<f64>,
    pub n_classes: usize,
}

impl VotePanel {
    /// Panel with uniform weights `1/M`.
    pub fn uniform(votes: Vec<Vec<usize>>, n_classes: usize) -> Result<Self> {
        let m = votes.first().map_or(0, Vec::len);
        if m == 0 {
            return Err(Error::arg("panel", "empty panel"));
        }
        Self::new(votes, vec![1.0 / m as f64; m], n_classes)
    }

    pub fn new(votes: Vec<Vec<usize>>, weights: Vec<f64>, n_classes: usize) -> Result<Self> {
        if votes.is_empty() || weights.is_empty() {
            return Err(Error::arg("panel", "empty panel"));
        }
        if votes.iter().any(|row| row.len() != weights.len()) {
            return Err(Error::arg(
                "weights",
                format!("{} weights for a panel of different width", weights.len()),
            ));
        }
        if weights.iter().any(|w| !(*w > 0.0)) {
            return Err(Error::arg("weights", "weights must be positive"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::arg("weights", format!("weights sum to {total}, not 1")));
        }
        if votes.iter().flatten().any(|&c| c >= n_classes) {
            return Err(Error::arg("votes", "class index outside the class table"));
        }
        Ok(Self { votes, weights, n_classes })
    }

    pub fn n_classifiers(&self) -> usize {
        self.weights.len()
    }
}

/// Normalizes raw non-negative scores (e.g. accuracies) into fusion weights.
pub fn normalize_weights(raw: &[f64]) -> Result<Vec<f64>> {
    let total: f64 = raw.iter().sum();
    if raw.is_empty() || raw.iter().any(|w| !(*w >= 0.0)) || !(total > 0.0) {
        return Err(Error::arg("weights", "need non-negative weights with positive sum"));
    }
    // a zero-accuracy member still gets a sliver so every weight stays positive
    let floored: Vec<f64> = raw.iter().map(|w| w.max(total * 1e-6)).collect();
    let t: f64 = floored.iter().sum();
    Ok(floored.iter().map(|w| w / t).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct VoteDistribution {
    /// `p[n][k]`: weighted vote share of class k for sample n.
    pub p: Vec<Vec<f64>>,
}

/// Weighted vote shares per sample and the winning class (lowest index on ties).
pub fn fuse_votes(panel: &VotePanel) -> Result<(Vec<usize>, VoteDistribution)> {
    if panel.n_classifiers() < 2 {
        return Err(Error::arg("panel", "fusion needs at least 2 classifiers"));
    }
    let mut fused = Vec::with_capacity(panel.votes.len());
    let mut p = Vec::with_capacity(panel.votes.len());
    for row in &panel.votes {
        let mut share = vec![0.0; panel.n_classes];
        for (&c, &w) in row.iter().zip(&panel.weights) {
            share[c] += w;
        }
        fused.push(argmax(&share));
        p.push(share);
    }
    Ok((fused, VoteDistribution { p }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceReport {
    /// Per-sample vote entropy in nats.
    pub entropy: Vec<f64>,
    /// Per-sample `1 - H/ln M`, clamped to [0, 1].
    pub confidence: Vec<f64>,
    /// Mean of the per-sample confidences.
    pub index: f64,
    pub n_classifiers: usize,
}

/// Shannon entropy of one distribution with `0·log 0 = 0`, in the given log base.
pub fn entropy_base(p: &[f64], base: f64) -> f64 {
    -p.iter()
        .filter(|&&v| v > 0.0)
        .map(|&v| v * v.ln() / base.ln())
        .sum::<f64>()
}

pub fn confidence_index(dist: &VoteDistribution, n_classifiers: usize) -> Result<ConfidenceReport> {
    confidence_index_base(dist, n_classifiers, std::f64::consts::E)
}

/// Confidence index with entropies taken in an arbitrary log base.
pub fn confidence_index_base(dist: &VoteDistribution, n_classifiers: usize, base: f64) -> Result<ConfidenceReport> {
    if n_classifiers < 2 {
        return Err(Error::arg("M", "the index needs at least 2 classifiers"));
    }
    if dist.p.is_empty() {
        return Err(Error::arg("distribution", "no samples"));
    }
    let norm = (n_classifiers as f64).ln() / base.ln();
    let mut entropy = Vec::with_capacity(dist.p.len());
    let mut confidence = Vec::with_capacity(dist.p.len());
    for row in &dist.p {
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > 1e-9 || row.iter().any(|v| *v < 0.0) {
            return Err(Error::arg("distribution", "rows must be probability vectors"));
        }
        let h = entropy_base(row, base);
        entropy.push(h);
        confidence.push((1.0 - h / norm).clamp(0.0, 1.0));
    }
    let index = confidence.iter().sum::<f64>() / confidence.len() as f64;
    Ok(ConfidenceReport {
        entropy,
        confidence,
        index,
        n_classifiers,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    /// `(false-positive rate, true-positive rate)` from (0,0) to (1,1).
    pub points: Vec<(f64, f64)>,
    pub auc: f64,
}

/// Threshold sweep over distinct scores, descending; tied scores move together.
pub fn roc_curve(scores: &[f64], truth: &[bool]) -> Result<RocCurve> {
    if scores.len() != truth.len() {
        return Err(Error::DimensionMismatch {
            expected: scores.len(),
            got: truth.len(),
        });
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::arg("scores", "non-finite score"));
    }
    let pos = truth.iter().filter(|&&t| t).count();
    let neg = truth.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::arg("truth", "both classes must be present"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut auc = 0.0;
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if truth[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let (x0, y0) = *points.last().expect("nonempty");
        let (x1, y1) = (fp as f64 / neg as f64, tp as f64 / pos as f64);
        auc += (x1 - x0) * (y0 + y1) / 2.0;
        points.push((x1, y1));
    }
    Ok(RocCurve { points, auc })
}

impl RocCurve {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["fpr", "tpr"])?;
        for (x, y) in &self.points {
            w.write_record([x.to_string(), y.to_string()])?;
        }
        w.flush().map_err(|e| Error::io("roc csv", e))?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Accept,
    Flag,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForecastDecision {
    pub fused_class: usize,
    pub confidence: f64,
    pub decision: Decision,
}

pub fn decide(fused_class: usize, confidence: f64, threshold: f64) -> Result<ForecastDecision> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::arg("threshold", "must lie in [0, 1]"));
    }
    Ok(ForecastDecision {
        fused_class,
        confidence,
        decision: if confidence >= threshold {
            Decision::Accept
        } else {
            Decision::Flag
        },
    })
}

/// Event score for ROC: the vote share not given to the normal class.
pub fn event_scores(dist: &VoteDistribution, normal_class: usize) -> Vec<f64> {
    dist.p.iter().map(|row| 1.0 - row[normal_class]).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleConfidence {
    pub fused_class: usize,
    pub confidence: f64,
    pub flagged: bool,
}

/// On-disk form of a confidence report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceJson {
    #[serde(rename = "E")]
    pub index: f64,
    #[serde(rename = "M")]
    pub n_classifiers: usize,
    pub per_sample: Vec<SampleConfidence>,
}

impl ConfidenceJson {
    pub fn build(report: &ConfidenceReport, fused: &[usize], threshold: f64) -> Result<Self> {
        let per_sample = fused
            .iter()
            .zip(&report.confidence)
            .map(|(&c, &conf)| {
                decide(c, conf, threshold).map(|d| SampleConfidence {
                    fused_class: c,
                    confidence: conf,
                    flagged: d.decision == Decision::Flag,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            index: report.index,
            n_classifiers: report.n_classifiers,
            per_sample,
        })
    }
}
