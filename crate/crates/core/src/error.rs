use std::path::PathBuf;

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: incompatible shapes {shapes:?}")]
    ShapeMismatch {
        op: &'static str,
        shapes: Vec<Vec<usize>>,
    },

    #[error("invalid tensor shape {shape:?} for {len} elements")]
    InvalidShape { shape: Vec<usize>, len: usize },

    #[error("backward requires a scalar loss, got shape {shape:?}")]
    NonScalarLoss { shape: Vec<usize> },

    #[error("variable {0} is not recorded on this tape")]
    UnknownVar(usize),

    #[error("label {label} is not a class index below {classes}")]
    InvalidLabel { label: f64, classes: usize },

    #[error("invalid probability vector: {0}")]
    InvalidProbabilities(String),

    #[error("temperature must be positive and finite, got {0}")]
    InvalidTemperature(f64),

    #[error("sampling count must be at least 1, got {0}")]
    InvalidSamplingCount(usize),

    #[error("code enumeration supports 1 <= K <= {max}, got K = {k}")]
    EnumerationBound { k: usize, max: usize },

    #[error("edge code has no set bit")]
    EmptyCode,

    #[error("{what} index {index} out of range (bound {bound})")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        bound: usize,
    },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: String, found: String },

    #[error("missing sample for edge {0}")]
    MissingEdgeSample(usize),

    #[error("non-finite {phase} loss at step {step} (tau = {tau}); sampled codes: {codes}")]
    NonFiniteLoss {
        phase: &'static str,
        step: usize,
        tau: f64,
        codes: String,
    },

    #[error("config field `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
