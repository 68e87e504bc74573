use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("vector norm {norm:e} is below the zero-vector cutoff")]
    ZeroVector { norm: f64 },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("matrix data has {actual} values, expected {rows}x{cols}")]
    ShapeMismatch {
        rows: usize,
        cols: usize,
        actual: usize,
    },

    #[error("matrix contains a non-finite value at index {index}")]
    NonFinite { index: usize },

    #[error("row {row} has norm {norm} but the matrix is flagged normalized")]
    NotNormalized { row: usize, norm: f64 },

    #[error("cannot form {k} clusters from {n} samples")]
    TooManyClusters { k: usize, n: usize },

    #[error("positive count {l} must lie in [1, {k}]")]
    BadPositiveCount { l: usize, k: usize },

    #[error("similarity threshold {0} must lie in (-1, 1)")]
    BadThreshold(f64),

    #[error("sampling ratio {0} must lie in (0, 1]")]
    BadRatio(f64),

    #[error("class id {label} out of range for {classes} classes")]
    BadLabel { label: usize, classes: usize },

    #[error("sample has no positive classes")]
    EmptyPositives,

    #[error("sample has no negative classes")]
    EmptyNegatives,

    #[error("loss became non-finite at step {step}")]
    NonFiniteLoss { step: u64 },

    #[error("labels contain a single class only")]
    DegenerateLabels,

    #[error("need at least {needed} samples, got {actual}")]
    TooFewSamples { needed: usize, actual: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("missing config key `{0}`")]
    MissingConfigKey(String),

    #[error("{path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code for the command-line front end: 3 for numeric
    /// failures, 2 for everything else (usage, format, contract violations).
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NonFiniteLoss { .. } | Error::ZeroVector { .. } => 3,
            _ => 2,
        }
    }
}
