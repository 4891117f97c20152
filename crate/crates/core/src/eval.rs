//! Zero-one error, k-fold cross-validation, the sensor-penetration sweep and
//! result tables.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{PipelineConfig, RunConfig};
use crate::error::{Error, Result};
use crate::fusion::{confidence_index, event_scores, fuse_votes, roc_curve, VotePanel};
use crate::grid::place_sensors;
use crate::pipeline::{build_dataset, fit_pipeline, Scenario};
use crate::seed::{derive_seed, digest_hex};
use crate::windowing::Dataset;

/// Fraction of positions where `predicted` and `truth` disagree.
pub fn mze(predicted: &[usize], truth: &[usize]) -> Result<f64> {
    if predicted.len() != truth.len() {
        return Err(Error::DimensionMismatch {
            expected: truth.len(),
            got: predicted.len(),
        });
    }
    if truth.is_empty() {
        return Err(Error::arg("truth", "no samples"));
    }
    let wrong = predicted.iter().zip(truth).filter(|(p, t)| p != t).count();
    Ok(wrong as f64 / truth.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalFingerprint {
    pub seed: u64,
    #[serde(rename = "A")]
    pub window: usize,
    pub k_pca: usize,
    pub penetration: Option<f64>,
    pub horizon: usize,
    pub dataset: String,
    /// Digest of every input above plus the full pipeline configuration.
    pub digest: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodResult {
    pub name: String,
    pub fold_mze: Vec<f64>,
    /// Arithmetic mean of `fold_mze`.
    pub mze: f64,
    /// Rounded mean over folds.
    pub param_count: usize,
    pub stored_samples: usize,
}

impl MethodResult {
    fn new(name: &str, fold_mze: Vec<f64>, params: &[usize], stored: &[usize]) -> Self {
        let mean = |v: &[usize]| (v.iter().sum::<usize>() as f64 / v.len() as f64).round() as usize;
        Self {
            name: name.to_string(),
            mze: fold_mze.iter().sum::<f64>() / fold_mze.len() as f64,
            fold_mze,
            param_count: mean(params),
            stored_samples: mean(stored),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub system: String,
    pub fingerprint: EvalFingerprint,
    pub folds: usize,
    pub n_samples: usize,
    pub n_classes: usize,
    pub class_counts: Vec<usize>,
    pub methods: Vec<MethodResult>,
    pub fused: MethodResult,
    /// Mean confidence over every held-out sample.
    #[serde(rename = "E")]
    pub confidence_index: f64,
    #[serde(rename = "fold_E")]
    pub fold_confidence: Vec<f64>,
    /// Event-versus-normal AUC of the fused vote shares; absent when one side is empty.
    pub auc: Option<f64>,
    pub warnings: Vec<String>,
}

impl EvalReport {
    pub fn method(&self, name: &str) -> Option<&MethodResult> {
        self.methods.iter().find(|m| m.name == name)
    }

    pub fn best_individual_mze(&self) -> f64 {
        self.methods.iter().map(|m| m.mze).fold(f64::INFINITY, f64::min)
    }
}

/// Held-out prediction for one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeldOutPrediction {
    pub index: usize,
    pub fold: usize,
    pub votes: Vec<usize>,
    pub fused: usize,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossValidation {
    pub report: EvalReport,
    /// In sample order.
    pub predictions: Vec<HeldOutPrediction>,
}

/// Seed used to fit the learners for held-out fold `fold`.
pub fn fold_fit_seed(seed: u64, fold: usize) -> u64 {
    derive_seed(seed, "fit", fold as u64)
}

struct FoldOutcome {
    method_mze: Vec<f64>,
    params: Vec<usize>,
    stored: Vec<usize>,
    fused_mze: f64,
    predictions: Vec<HeldOutPrediction>,
    event_scores: Vec<f64>,
    fold_e: f64,
    warnings: Vec<String>,
}

fn run_fold(ds: &Dataset, cfg: &PipelineConfig, fold: usize, seed: u64) -> Result<FoldOutcome> {
    let folds = &ds.meta.folds;
    let (train, test): (Vec<usize>, Vec<usize>) = (0..ds.len()).partition(|&i| folds[i] != fold);
    if train.is_empty() || test.is_empty() {
        return Err(Error::arg("folds", format!("fold {fold} leaves an empty split")));
    }
    let mut warnings = Vec::new();
    let train_classes: BTreeSet<usize> = train.iter().map(|&i| ds.samples[i].class).collect();
    let all_classes: BTreeSet<usize> = ds.samples.iter().map(|s| s.class).collect();
    let missing: Vec<usize> = all_classes.difference(&train_classes).copied().collect();
    if !missing.is_empty() {
        warnings.push(format!("fold {fold}: classes {missing:?} absent from training folds"));
    }
    let rows: Vec<&[f64]> = train.iter().map(|&i| ds.samples[i].features.as_slice()).collect();
    let labels: Vec<usize> = train.iter().map(|&i| ds.samples[i].class).collect();
    let pipe = fit_pipeline(&rows, &labels, ds.n_classes(), cfg, fold_fit_seed(seed, fold))?;
    warnings.extend(pipe.warnings.iter().map(|w| format!("fold {fold}: {w}")));
    drop(rows);

    let test_rows: Vec<&[f64]> = test.iter().map(|&i| ds.samples[i].features.as_slice()).collect();
    let truth: Vec<usize> = test.iter().map(|&i| ds.samples[i].class).collect();
    let votes = pipe.member_votes(&test_rows)?;
    let method_mze = (0..pipe.members.len())
        .map(|m| mze(&votes.iter().map(|v| v[m]).collect::<Vec<_>>(), &truth))
        .collect::<Result<Vec<_>>>()?;
    let panel = VotePanel::new(votes.clone(), pipe.weights.clone(), ds.n_classes())?;
    let (fused, dist) = fuse_votes(&panel)?;
    let conf = confidence_index(&dist, pipe.members.len())?;
    let predictions = test
        .iter()
        .zip(votes)
        .enumerate()
        .map(|(j, (&index, votes))| HeldOutPrediction {
            index,
            fold,
            votes,
            fused: fused[j],
            confidence: conf.confidence[j],
        })
        .collect();
    Ok(FoldOutcome {
        method_mze,
        params: pipe.members.iter().map(|m| m.model.param_count()).collect(),
        stored: pipe.members.iter().map(|m| m.model.stored_samples()).collect(),
        fused_mze: mze(&fused, &truth)?,
        predictions,
        event_scores: event_scores(&dist, 0),
        fold_e: conf.index,
        warnings,
    })
}

/// k-fold cross-validation using the fold ids stored in the dataset. Every
/// fitted stage sees training folds only.
pub fn cross_validate(ds: &Dataset, cfg: &PipelineConfig, k: usize, seed: u64) -> Result<EvalReport> {
    Ok(cross_validate_detailed(ds, cfg, k, seed)?.report)
}

pub fn cross_validate_detailed(ds: &Dataset, cfg: &PipelineConfig, k: usize, seed: u64) -> Result<CrossValidation> {
    cfg.validate()?;
    if k < 2 {
        return Err(Error::arg("folds", "need at least 2 folds"));
    }
    if ds.meta.folds.len() != ds.len() || ds.n_folds() != k {
        return Err(Error::arg(
            "folds",
            format!("dataset carries {} folds, {k} requested", ds.n_folds()),
        ));
    }
    let outcomes = (0..k)
        .into_par_iter()
        .map(|f| run_fold(ds, cfg, f, seed))
        .collect::<Result<Vec<_>>>()?;

    let mut warnings = ds.meta.warnings.clone();
    let mut predictions = Vec::with_capacity(ds.len());
    let mut params_fused = Vec::new();
    for o in &outcomes {
        warnings.extend(o.warnings.iter().cloned());
        params_fused.push(o.params.iter().sum::<usize>());
    }
    let methods = cfg
        .methods
        .iter()
        .enumerate()
        .map(|(m, name)| {
            let fold_mze: Vec<f64> = outcomes.iter().map(|o| o.method_mze[m]).collect();
            let params: Vec<usize> = outcomes.iter().map(|o| o.params[m]).collect();
            let stored: Vec<usize> = outcomes.iter().map(|o| o.stored[m]).collect();
            MethodResult::new(name, fold_mze, &params, &stored)
        })
        .collect();
    let fused = MethodResult::new(
        "fused",
        outcomes.iter().map(|o| o.fused_mze).collect(),
        &params_fused,
        &outcomes.iter().map(|o| o.stored.iter().sum()).collect::<Vec<usize>>(),
    );
    let mut scores = Vec::with_capacity(ds.len());
    let mut events = Vec::with_capacity(ds.len());
    for o in outcomes.iter() {
        scores.extend_from_slice(&o.event_scores);
        events.extend(o.predictions.iter().map(|p| ds.samples[p.index].class != 0));
    }
    let auc = if events.iter().any(|&e| e) && events.iter().any(|&e| !e) {
        Some(roc_curve(&scores, &events)?.auc)
    } else {
        None
    };
    let fold_confidence: Vec<f64> = outcomes.iter().map(|o| o.fold_e).collect();
    for o in outcomes {
        predictions.extend(o.predictions);
    }
    predictions.sort_by_key(|p| p.index);
    let confidence_index = predictions.iter().map(|p| p.confidence).sum::<f64>() / predictions.len() as f64;

    let digest_input = serde_json::json!({
        "dataset": ds.meta.fingerprint,
        "pipeline": cfg,
        "folds": k,
        "seed": seed,
    });
    let report = EvalReport {
        system: String::new(),
        fingerprint: EvalFingerprint {
            seed,
            window: ds.meta.window,
            k_pca: cfg.k_pca,
            penetration: None,
            horizon: ds.meta.horizon,
            dataset: ds.meta.fingerprint.clone(),
            digest: digest_hex(digest_input.to_string().as_bytes()),
        },
        folds: k,
        n_samples: ds.len(),
        n_classes: ds.n_classes(),
        class_counts: ds.class_counts(),
        methods,
        fused,
        confidence_index,
        fold_confidence,
        auc,
        warnings,
    };
    Ok(CrossValidation { report, predictions })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacementResult {
    pub index: usize,
    pub seed: u64,
    pub sensors: Vec<u32>,
    pub n_samples: usize,
    pub fused_mze: Option<f64>,
    pub skipped: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub penetration: f64,
    /// Mean fused MZE over the placements that were not skipped.
    pub mze: Option<f64>,
    pub n_placements: usize,
    pub placements: Vec<PlacementResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub fingerprint: String,
    pub seed: u64,
    pub points: Vec<SweepPoint>,
}

impl SweepResult {
    pub fn mze_at(&self, penetration: f64) -> Option<f64> {
        self.points
            .iter()
            .find(|p| (p.penetration - penetration).abs() < 1e-12)
            .and_then(|p| p.mze)
    }
}

fn run_placement(cfg: &RunConfig, scenario: &Scenario, penetration: f64, index: usize, seed: u64) -> Result<PlacementResult> {
    let placement = place_sensors(&scenario.topology, penetration, derive_seed(seed, "sensors", 0))?;
    let ds = build_dataset(cfg, scenario, &placement, seed)?;
    let present = ds.class_counts().iter().filter(|&&c| c > 0).count();
    let mut result = PlacementResult {
        index,
        seed,
        sensors: placement.sensor_buses.clone(),
        n_samples: ds.len(),
        fused_mze: None,
        skipped: None,
    };
    if present < 2 {
        result.skipped = Some(format!("dataset has {present} class(es) over {} samples", ds.len()));
    } else if ds.n_folds() != cfg.evaluation.folds {
        result.skipped = Some(format!("{} samples cannot fill {} folds", ds.len(), cfg.evaluation.folds));
    } else {
        let report = cross_validate(&ds, &cfg.pipeline, cfg.evaluation.folds, seed)?;
        result.fused_mze = Some(report.fused.mze);
    }
    log::info!(
        "sweep p={penetration} placement {index}: {:?}",
        result.fused_mze.map_or_else(|| result.skipped.clone().unwrap_or_default(), |m| format!("{m:.4}"))
    );
    Ok(result)
}

/// Runs the simulate → dataset → cross-validate path for every
/// (penetration, placement) pair and averages the fused MZE per penetration.
/// Loads come from the master seed, so placements differ only in sensors and noise.
pub fn penetration_sweep(cfg: &RunConfig) -> Result<SweepResult> {
    cfg.validate()?;
    let ev = &cfg.evaluation;
    let scenario = Scenario::from_config(cfg)?;
    let jobs: Vec<(usize, usize)> = (0..ev.penetrations.len())
        .flat_map(|i| (0..ev.placements).map(move |j| (i, j)))
        .collect();
    let results = jobs
        .par_iter()
        .map(|&(i, j)| {
            let seed = derive_seed(derive_seed(cfg.seed, "sweep", i as u64), "placement", j as u64);
            run_placement(cfg, &scenario, ev.penetrations[i], j, seed)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut results = results.into_iter();
    let points = ev
        .penetrations
        .iter()
        .map(|&penetration| {
            let placements: Vec<PlacementResult> = results.by_ref().take(ev.placements).collect();
            let used: Vec<f64> = placements.iter().filter_map(|p| p.fused_mze).collect();
            SweepPoint {
                penetration,
                mze: (!used.is_empty()).then(|| used.iter().sum::<f64>() / used.len() as f64),
                n_placements: used.len(),
                placements,
            }
        })
        .collect();
    Ok(SweepResult {
        fingerprint: cfg.fingerprint(),
        seed: cfg.seed,
        points,
    })
}

/// One input to a result table.
pub enum Reportable<'a> {
    Eval(&'a EvalReport),
    Sweep(&'a SweepResult),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportTable {
    pub columns: Vec<String>,
    pub rows: Vec<(String, Vec<String>)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rendered {
    pub text: String,
    pub csv: String,
    pub json: String,
}

/// Table cell in `MZE/parameter-count` form.
pub fn cell(mze: f64, params: usize) -> String {
    format!("{mze:.3}/{params}")
}

fn row_label(r: &EvalReport, i: usize) -> String {
    if !r.system.is_empty() {
        r.system.clone()
    } else {
        format!("run{}", i + 1)
    }
}

/// Rows are runs, columns are methods; sweep points fill the `fused` column.
pub fn report(items: &[Reportable]) -> Result<Rendered> {
    if items.is_empty() {
        return Err(Error::arg("reports", "nothing to report"));
    }
    let mut columns: Vec<String> = Vec::new();
    for item in items {
        if let Reportable::Eval(r) = item {
            for m in &r.methods {
                if !columns.contains(&m.name) {
                    columns.push(m.name.clone());
                }
            }
        }
    }
    columns.push("fused".into());
    let mut rows = Vec::new();
    let mut json_items = Vec::new();
    for (i, item) in items.iter().enumerate() {
        match item {
            Reportable::Eval(r) => {
                let cells = columns
                    .iter()
                    .map(|c| {
                        if c == "fused" {
                            cell(r.fused.mze, r.fused.param_count)
                        } else {
                            r.method(c).map_or_else(|| "-".to_string(), |m| cell(m.mze, m.param_count))
                        }
                    })
                    .collect();
                rows.push((row_label(r, i), cells));
                json_items.push(serde_json::to_value(r)?);
            }
            Reportable::Sweep(s) => {
                for p in &s.points {
                    let mut cells = vec!["-".to_string(); columns.len()];
                    *cells.last_mut().expect("fused column") =
                        p.mze.map_or_else(|| "-".to_string(), |m| format!("{m:.3}"));
                    rows.push((format!("p={:.2} (n={})", p.penetration, p.n_placements), cells));
                }
                json_items.push(serde_json::to_value(s)?);
            }
        }
    }
    let table = ReportTable { columns, rows };
    Ok(Rendered {
        text: render_text(&table),
        csv: render_csv(&table)?,
        json: serde_json::to_string_pretty(&serde_json::json!({ "table": table, "results": json_items }))? + "\n",
    })
}

fn render_text(t: &ReportTable) -> String {
    let mut widths: Vec<usize> = std::iter::once(t.rows.iter().map(|r| r.0.len()).max().unwrap_or(0).max(6))
        .chain(t.columns.iter().map(|c| c.len()))
        .collect();
    for (_, cells) in &t.rows {
        for (j, c) in cells.iter().enumerate() {
            widths[j + 1] = widths[j + 1].max(c.len());
        }
    }
    let mut out = String::new();
    let line = |out: &mut String, first: &str, rest: &[String]| {
        let _ = write!(out, "{first:<w$}", w = widths[0]);
        for (j, c) in rest.iter().enumerate() {
            let _ = write!(out, "  {c:>w$}", w = widths[j + 1]);
        }
        out.push('\n');
    };
    line(&mut out, "system", &t.columns);
    for (label, cells) in &t.rows {
        line(&mut out, label, cells);
    }
    out
}

fn render_csv(t: &ReportTable) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(std::iter::once("system").chain(t.columns.iter().map(String::as_str)))?;
    for (label, cells) in &t.rows {
        w.write_record(std::iter::once(label.as_str()).chain(cells.iter().map(String::as_str)))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::io("report csv", e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |m| format!("{m}"))
}

/// Two-column `penetration,mze`; points with no usable placement leave `mze` empty.
pub fn sweep_plot_csv(s: &SweepResult) -> String {
    let mut out = String::from("penetration,mze\n");
    for p in &s.points {
        let _ = writeln!(out, "{},{}", p.penetration, fmt_opt(p.mze));
    }
    out
}

/// `penetration,mze,n_placements`.
pub fn sweep_csv(s: &SweepResult) -> String {
    let mut out = String::from("penetration,mze,n_placements\n");
    for p in &s.points {
        let _ = writeln!(out, "{},{},{}", p.penetration, fmt_opt(p.mze), p.n_placements);
    }
    out
}
