//! Scenario construction and the fitted reduce → classify → fuse pipeline.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{PipelineConfig, RunConfig, WeightMode};
use crate::dimred::{fit_pca_with, fit_standardizer, rows_to_matrix, PcaJson, PcaModel, Standardizer};
use crate::error::{Error, Result};
use crate::fusion::{
    confidence_index, decide, fuse_votes, normalize_weights, Decision, VotePanel,
};
use crate::grid::{
    generate_loads, load_case, place_sensors, simulate, GridTopology, LoadProfile, SensorPlacement,
    SimConfig, SimulationTrace,
};
use crate::io::{write_dir_atomic, write_json_atomic};
use crate::learners::{Classifier, LearnerRegistry, ModelEnvelope, TrainingSet};
use crate::seed::derive_seed;
use crate::windowing::{assemble, split_folds, Dataset, DatasetMeta, LabelVector};

/// Topology plus the load profile drawn from the master seed.
pub struct Scenario {
    pub topology: GridTopology,
    pub loads: LoadProfile,
}

impl Scenario {
    pub fn from_config(cfg: &RunConfig) -> Result<Self> {
        let topology = load_case(&cfg.case)?;
        let loads = generate_loads(&topology, &cfg.loads, derive_seed(cfg.seed, "loads", 0))?;
        Ok(Self { topology, loads })
    }
}

/// Simulates every day of the profile separately; the network is restored at
/// each day boundary.
pub fn simulate_days(
    topology: &GridTopology,
    loads: &LoadProfile,
    placement: &SensorPlacement,
    sim: &SimConfig,
    seed: u64,
) -> Result<Vec<SimulationTrace>> {
    loads
        .days()
        .par_iter()
        .enumerate()
        .map(|(d, day)| {
            let mut t = simulate(topology, day, placement, sim, derive_seed(seed, "sim-day", d as u64))?;
            t.origin = d * loads.slots_per_day;
            Ok(t)
        })
        .collect()
}

/// Per-day traces for one sensor placement; `seed` drives measurement noise.
pub fn simulate_placement(cfg: &RunConfig, scenario: &Scenario, placement: &SensorPlacement, seed: u64) -> Result<Vec<SimulationTrace>> {
    simulate_days(&scenario.topology, &scenario.loads, placement, &cfg.simulation, derive_seed(seed, "sim", 0))
}

/// The sensor placement used by single-run commands.
pub fn config_placement(cfg: &RunConfig, scenario: &Scenario) -> Result<SensorPlacement> {
    place_sensors(&scenario.topology, cfg.penetration, derive_seed(cfg.seed, "placement", 0))
}

/// Full simulate → window → fold path for one sensor placement.
pub fn build_dataset(cfg: &RunConfig, scenario: &Scenario, placement: &SensorPlacement, seed: u64) -> Result<Dataset> {
    let traces = simulate_placement(cfg, scenario, placement, seed)?;
    let mut ds = assemble(&traces, &scenario.topology, &cfg.windowing, seed)?;
    if ds.len() >= cfg.evaluation.folds {
        split_folds(&mut ds, cfg.evaluation.folds, derive_seed(seed, "folds", 0))?;
    } else {
        ds.meta.warnings.push(format!(
            "{} samples are too few for {} folds",
            ds.len(),
            cfg.evaluation.folds
        ));
    }
    Ok(ds)
}

/// Dataset for the configured case, penetration and master seed.
pub fn dataset_from_config(cfg: &RunConfig) -> Result<(Scenario, Dataset)> {
    let scenario = Scenario::from_config(cfg)?;
    let placement = config_placement(cfg, &scenario)?;
    let mut ds = build_dataset(cfg, &scenario, &placement, cfg.seed)?;
    ds.meta.fingerprint = cfg.dataset_fingerprint();
    Ok((scenario, ds))
}

#[derive(Debug)]
pub struct Member {
    pub name: String,
    pub model: Box<dyn Classifier>,
}

/// A fitted reducer, classifier suite and fusion rule.
#[derive(Debug)]
pub struct TrainedPipeline {
    pub reducer: PcaModel,
    pub members: Vec<Member>,
    pub weights: Vec<f64>,
    pub threshold: f64,
    pub n_classes: usize,
    pub warnings: Vec<String>,
}

/// Fused output for one feature row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forecast {
    pub fused_class: usize,
    pub votes: Vec<usize>,
    pub shares: Vec<f64>,
    pub confidence: f64,
    pub decision: Decision,
}

/// Fits the pipeline on raw feature rows. `fit_seed` seeds the stochastic learners.
pub fn fit_pipeline<R: AsRef<[f64]> + Sync>(
    rows: &[R],
    labels: &[usize],
    n_classes: usize,
    cfg: &PipelineConfig,
    fit_seed: u64,
) -> Result<TrainedPipeline> {
    cfg.validate()?;
    let x = rows_to_matrix(rows)?;
    let (n, d) = x.shape();
    let mut warnings = Vec::new();
    let (st, z) = if cfg.standardize {
        let st = fit_standardizer(&x)?;
        let z = st.apply(&x)?;
        (st, z)
    } else {
        (Standardizer::identity(d), x)
    };
    let k = cfg.k_pca.min(n).min(d);
    if k < cfg.k_pca {
        warnings.push(format!("k_pca reduced from {} to {k} (n = {n}, d = {d})", cfg.k_pca));
    }
    let mut reducer = fit_pca_with(&z, k, cfg.pca_solver)?.with_standardizer(&st)?;
    drop(z);
    // divide all scores by the leading component's std; geometry is unchanged
    let lead = reducer.singular_values[0] / (n as f64).sqrt();
    if lead > 1e-12 {
        for s in reducer.scale.iter_mut() {
            *s *= lead;
        }
    }
    let projected = reducer.project(rows)?;
    let train = TrainingSet::new(projected, labels.to_vec(), n_classes)?;

    let mut learners = cfg.learners.clone();
    learners.svm.seed = fit_seed;
    let registry = LearnerRegistry::standard(&learners);
    let selected = registry.select(&cfg.methods)?;
    let members = selected
        .par_iter()
        .map(|l| {
            Ok(Member {
                name: l.name().to_string(),
                model: l.fit(&train)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let weights = match cfg.fusion.weights {
        WeightMode::Uniform => vec![1.0 / members.len() as f64; members.len()],
        WeightMode::Accuracy => {
            let acc: Vec<f64> = members
                .iter()
                .map(|m| {
                    let hits = train
                        .features
                        .iter()
                        .zip(&train.labels)
                        .filter(|(f, &y)| m.model.predict(f).map(|p| p == y).unwrap_or(false))
                        .count();
                    hits as f64 / train.len() as f64
                })
                .collect();
            normalize_weights(&acc)?
        }
    };
    Ok(TrainedPipeline {
        reducer,
        members,
        weights,
        threshold: cfg.fusion.threshold,
        n_classes,
        warnings,
    })
}

impl TrainedPipeline {
    /// Per-member predictions for each row, as `[row][member]`.
    pub fn member_votes<R: AsRef<[f64]> + Sync>(&self, rows: &[R]) -> Result<Vec<Vec<usize>>> {
        let projected = self.reducer.project(rows)?;
        projected
            .par_iter()
            .map(|y| self.members.iter().map(|m| m.model.predict(y)).collect())
            .collect()
    }

    pub fn forecast<R: AsRef<[f64]> + Sync>(&self, rows: &[R]) -> Result<Vec<Forecast>> {
        let votes = self.member_votes(rows)?;
        let panel = VotePanel::new(votes.clone(), self.weights.clone(), self.n_classes)?;
        let (fused, dist) = fuse_votes(&panel)?;
        let report = confidence_index(&dist, self.members.len())?;
        fused
            .into_iter()
            .zip(votes)
            .zip(dist.p)
            .zip(report.confidence)
            .map(|(((c, v), p), conf)| {
                Ok(Forecast {
                    fused_class: c,
                    votes: v,
                    shares: p,
                    confidence: conf,
                    decision: decide(c, conf, self.threshold)?.decision,
                })
            })
            .collect()
    }

    pub fn param_counts(&self) -> Vec<usize> {
        self.members.iter().map(|m| m.model.param_count()).collect()
    }
}

pub const BUNDLE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BundleManifest {
    pub version: u32,
    pub fingerprint: String,
    pub dataset_fingerprint: String,
    /// Layout digest of the training dataset; inputs must match it.
    pub layout_fingerprint: String,
    pub methods: Vec<String>,
    pub n_classes: usize,
    pub patterns: Vec<LabelVector>,
    pub holdout_fold: Option<usize>,
    pub reducer: String,
    pub fusion: String,
    pub models: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FusionFile {
    #[serde(rename = "M")]
    pub n_classifiers: usize,
    pub weights: Vec<f64>,
    pub threshold: f64,
}

/// A trained pipeline together with the class table it predicts into.
#[derive(Debug)]
pub struct Bundle {
    pub manifest: BundleManifest,
    pub pipeline: TrainedPipeline,
}

impl Bundle {
    pub fn save(&self, dir: &Path) -> Result<()> {
        let p = &self.pipeline;
        write_dir_atomic(dir, |tmp| {
            fs::create_dir_all(tmp.join("models")).map_err(|e| Error::io(tmp, e))?;
            write_json_atomic(&tmp.join(&self.manifest.reducer), &p.reducer.to_json())?;
            write_json_atomic(
                &tmp.join(&self.manifest.fusion),
                &FusionFile {
                    n_classifiers: p.members.len(),
                    weights: p.weights.clone(),
                    threshold: p.threshold,
                },
            )?;
            for (m, file) in p.members.iter().zip(&self.manifest.models) {
                write_json_atomic(&tmp.join(file), &m.model.envelope()?)?;
            }
            write_json_atomic(&tmp.join("manifest.json"), &self.manifest)
        })
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let read = |name: &str| -> Result<String> {
            let path = dir.join(name);
            fs::read_to_string(&path).map_err(|e| Error::io(&path, e))
        };
        let manifest: BundleManifest = serde_json::from_str(&read("manifest.json")?)
            .map_err(|e| Error::schema("manifest.json", e.to_string()))?;
        if manifest.version != BUNDLE_VERSION {
            return Err(Error::schema("manifest.version", "unsupported bundle version"));
        }
        if manifest.patterns.len() != manifest.n_classes {
            return Err(Error::schema("manifest.patterns", "one pattern per class expected"));
        }
        if manifest.models.len() != manifest.methods.len() {
            return Err(Error::schema("manifest.models", "one file per method expected"));
        }
        let pca: PcaJson = serde_json::from_str(&read(&manifest.reducer)?)
            .map_err(|e| Error::schema(&manifest.reducer, e.to_string()))?;
        let reducer = PcaModel::from_json(pca)?;
        let fusion: FusionFile = serde_json::from_str(&read(&manifest.fusion)?)
            .map_err(|e| Error::schema(&manifest.fusion, e.to_string()))?;
        if fusion.weights.len() != manifest.methods.len() || fusion.n_classifiers != fusion.weights.len() {
            return Err(Error::schema("fusion.weights", "one weight per method expected"));
        }
        let registry = LearnerRegistry::standard(&Default::default());
        let mut members = Vec::new();
        for (name, file) in manifest.methods.iter().zip(&manifest.models) {
            let env: ModelEnvelope = serde_json::from_str(&read(file)?)
                .map_err(|e| Error::schema(file, e.to_string()))?;
            if &env.kind != name {
                return Err(Error::schema(file, format!("kind `{}` but manifest says `{name}`", env.kind)));
            }
            let model = registry.decode(env)?;
            if model.n_features() != reducer.k || model.n_classes() != manifest.n_classes {
                return Err(Error::schema(file, "model shape does not match the reducer"));
            }
            members.push(Member { name: name.clone(), model });
        }
        let pipeline = TrainedPipeline {
            reducer,
            members,
            weights: fusion.weights,
            threshold: fusion.threshold,
            n_classes: manifest.n_classes,
            warnings: Vec::new(),
        };
        Ok(Self { manifest, pipeline })
    }
}

/// Standard file layout for a bundle trained on `methods`.
pub fn manifest_for(fingerprint: String, meta: &DatasetMeta, methods: &[String], holdout_fold: Option<usize>) -> BundleManifest {
    BundleManifest {
        version: BUNDLE_VERSION,
        fingerprint,
        dataset_fingerprint: meta.fingerprint.clone(),
        layout_fingerprint: meta.layout_fingerprint(),
        methods: methods.to_vec(),
        n_classes: meta.patterns.len(),
        patterns: meta.patterns.clone(),
        holdout_fold,
        reducer: "reducer.json".into(),
        fusion: "fusion.json".into(),
        models: methods.iter().map(|m| format!("models/{m}.json")).collect(),
    }
}
