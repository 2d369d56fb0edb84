//! Error type shared across the crate.

use thiserror::Error;

/// Errors produced by dataset validation, numeric routines, and I/O.
#[derive(Debug, Error)]
pub enum NrdepError {
    #[error("views have different sample counts: view {view} has {got} rows, expected {expected}")]
    RowCountMismatch {
        view: usize,
        got: usize,
        expected: usize,
    },

    #[error("non-finite value (NaN or Inf) in view {view} at row {row}, column {col}")]
    NonFiniteValue { view: usize, row: usize, col: usize },

    #[error("too few samples: got {got}, need at least 2")]
    TooFewSamples { got: usize },

    #[error("degenerate view: all samples identical (zero maximum pairwise distance)")]
    DegenerateView,

    #[error("dimension mismatch: {context}")]
    DimensionMismatch { context: String },

    #[error("length mismatch: left has {left} entries, right has {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("zero vector where a nonzero vector is required: {context}")]
    ZeroVector { context: String },

    #[error("k={k} neighbors requested but only {available} other points exist")]
    KTooLarge { k: usize, available: usize },

    #[error("rank-deficient covariance (ridge=0); smallest eigenvalue {min_eig:.3e}")]
    RankDeficiency { min_eig: f64 },

    #[error("parse error at line {line}, column {col}: {msg}")]
    ParseError { line: usize, col: usize, msg: String },

    #[error("ragged rows: line {line} has {got} fields, expected {expected}")]
    RaggedRows {
        line: usize,
        got: usize,
        expected: usize,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, NrdepError>;

impl NrdepError {
    pub(crate) fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        NrdepError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn dim(context: impl Into<String>) -> Self {
        NrdepError::DimensionMismatch {
            context: context.into(),
        }
    }
}
