use thiserror::Error;

/// Errors raised across the simulation, dataset and learning pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown case `{0}`")]
    UnknownCase(String),

    #[error("malformed case file at line {line}: {field}: {reason}")]
    MalformedCase {
        line: usize,
        field: String,
        reason: String,
    },

    #[error("invalid topology: {0}")]
    InvalidTopology(String),

    #[error("singular susceptance matrix: {0}")]
    SingularNetwork(String),

    #[error("invalid argument `{name}`: {reason}")]
    InvalidArgument { name: &'static str, reason: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("divergent training for class {class}: non-finite loss at iteration {iteration}")]
    Divergence { class: usize, iteration: usize },

    #[error("schema violation in `{field}`: {reason}")]
    Schema { field: String, reason: String },

    #[error("fingerprint mismatch: bundle {bundle}, input {input}")]
    FingerprintMismatch { bundle: String, input: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn arg(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidArgument {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn schema(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Schema {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// Short machine-readable tag for the error family.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::UnknownCase(_) => "unknown_case",
            Error::MalformedCase { .. } => "malformed_case",
            Error::InvalidTopology(_) => "invalid_topology",
            Error::SingularNetwork(_) => "singular_network",
            Error::InvalidArgument { .. } => "invalid_argument",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::Divergence { .. } => "divergence",
            Error::Schema { .. } => "schema",
            Error::FingerprintMismatch { .. } => "fingerprint_mismatch",
            Error::Io { .. } => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
