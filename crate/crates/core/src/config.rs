//! Run configuration shared by every command, and its fingerprint.

use serde::{Deserialize, Serialize};

use crate::dimred::PcaSolver;
use crate::error::{Error, Result};
use crate::grid::{LoadConfig, SimConfig};
use crate::learners::{LearnerConfigs, LearnerRegistry};
use crate::seed::digest_hex;
use crate::windowing::WindowConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum WeightMode {
    #[default]
    Uniform,
    /// Weights proportional to each member's accuracy on its training data.
    Accuracy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionConfig {
    pub weights: WeightMode,
    pub threshold: f64,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            weights: WeightMode::Uniform,
            threshold: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub k_pca: usize,
    pub standardize: bool,
    pub pca_solver: PcaSolver,
    /// Registered learner names, in report order.
    pub methods: Vec<String>,
    pub learners: LearnerConfigs,
    pub fusion: FusionConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let mut learners = LearnerConfigs::default();
        learners.gnb.skip_sparse_classes = true;
        // scores are scaled to unit variance on the leading component, which
        // bounds the logistic loss curvature by about 1/4
        learners.logistic.learning_rate = 2.0;
        learners.logistic.iterations = 1000;
        Self {
            k_pca: 50,
            standardize: true,
            pca_solver: PcaSolver::Auto,
            methods: ["svm", "logistic", "tree", "knn", "gnb"].map(String::from).to_vec(),
            learners,
            fusion: FusionConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_pca < 1 {
            return Err(Error::schema("pipeline.k_pca", "must be at least 1"));
        }
        if self.methods.len() < 2 {
            return Err(Error::schema("pipeline.methods", "fusion needs at least 2 methods"));
        }
        let registry = LearnerRegistry::standard(&self.learners);
        for (i, m) in self.methods.iter().enumerate() {
            registry
                .get(m)
                .map_err(|_| Error::schema("pipeline.methods", format!("unknown method `{m}`")))?;
            if self.methods[..i].contains(m) {
                return Err(Error::schema("pipeline.methods", format!("`{m}` listed twice")));
            }
        }
        if !(0.0..=1.0).contains(&self.fusion.threshold) {
            return Err(Error::schema("pipeline.fusion.threshold", "must lie in [0, 1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub folds: usize,
    pub penetrations: Vec<f64>,
    pub placements: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            folds: 3,
            penetrations: vec![0.05, 0.10, 0.15, 0.20, 0.25, 0.30],
            placements: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Bundled case name or path to a case file.
    pub case: String,
    pub seed: u64,
    pub out_dir: String,
    pub penetration: f64,
    pub loads: LoadConfig,
    pub simulation: SimConfig,
    pub windowing: WindowConfig,
    pub pipeline: PipelineConfig,
    pub evaluation: EvalConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            case: "ieee30".into(),
            seed: 2024,
            out_dir: "out".into(),
            penetration: 0.2,
            // 300 s slots put every 166-slot window's end in the afternoon
            // peak band; a 6 h stress ramp makes the build-up visible inside
            // the 30-slot horizon
            loads: LoadConfig {
                days: 168,
                step_seconds: 300,
                stress_fraction: 0.75,
                stress_level: 1.1,
                stress_width_hours: 6.0,
                ..Default::default()
            },
            simulation: SimConfig::default(),
            windowing: WindowConfig {
                window: 166,
                stride: 4,
                horizon: 30,
            },
            pipeline: PipelineConfig::default(),
            evaluation: EvalConfig::default(),
        }
    }
}

fn prefixed(e: Error, prefix: &str) -> Error {
    match e {
        Error::InvalidArgument { name, reason } => Error::schema(format!("{prefix}.{name}"), reason),
        other => other,
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::schema("config", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.case.is_empty() {
            return Err(Error::schema("case", "must name a case"));
        }
        if !(self.penetration > 0.0 && self.penetration <= 1.0) {
            return Err(Error::schema("penetration", "must lie in (0, 1]"));
        }
        self.loads.validate().map_err(|e| prefixed(e, "loads"))?;
        self.simulation.validate().map_err(|e| prefixed(e, "simulation"))?;
        self.windowing.validate().map_err(|e| prefixed(e, "windowing"))?;
        self.pipeline.validate()?;
        let ev = &self.evaluation;
        if ev.folds < 2 {
            return Err(Error::schema("evaluation.folds", "must be at least 2"));
        }
        if ev.placements < 1 {
            return Err(Error::schema("evaluation.placements", "must be at least 1"));
        }
        if ev.penetrations.is_empty() {
            return Err(Error::schema("evaluation.penetrations", "must not be empty"));
        }
        if ev.penetrations.iter().any(|p| !(*p > 0.0 && *p <= 1.0)) {
            return Err(Error::schema("evaluation.penetrations", "each must lie in (0, 1]"));
        }
        if ev.penetrations.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::schema("evaluation.penetrations", "must be strictly increasing"));
        }
        Ok(())
    }

    /// SHA-256 over the canonical JSON of everything except the output directory.
    pub fn fingerprint(&self) -> String {
        let mut c = self.clone();
        c.out_dir.clear();
        digest_hex(serde_json::to_string(&c).expect("config serializes").as_bytes())
    }

    /// Fingerprint of the settings that determine the dataset alone.
    pub fn dataset_fingerprint(&self) -> String {
        let key = serde_json::json!({
            "case": self.case,
            "seed": self.seed,
            "penetration": self.penetration,
            "loads": self.loads,
            "simulation": self.simulation,
            "windowing": self.windowing,
            "folds": self.evaluation.folds,
        });
        digest_hex(key.to_string().as_bytes())
    }
}

/// First eight hex digits, used in output file names.
pub fn short(fingerprint: &str) -> &str {
    &fingerprint[..fingerprint.len().min(8)]
}
