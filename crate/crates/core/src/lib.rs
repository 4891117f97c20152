//! Line-trip forecasting from synchrophasor-style measurements.
//!
//! The pipeline runs a synthetic grid simulator, cuts the traces into moving
//! windows, reduces them with PCA, classifies them with a suite of learners
//! and fuses the learners' votes with an entropy-based confidence index.

pub mod config;
pub mod dimred;
pub mod error;
pub mod eval;
pub mod fusion;
pub mod grid;
pub mod io;
pub mod learners;
pub mod pipeline;
pub mod seed;
pub mod windowing;

pub use error::{Error, Result};
pub use config::RunConfig;
pub use eval::{cross_validate, mze, penetration_sweep, EvalReport, SweepResult};
pub use pipeline::{fit_pipeline, Bundle, TrainedPipeline};
