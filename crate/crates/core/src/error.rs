use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("row {row}: expected {expected} columns, found {found}")]
    ColumnCount {
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error("header mismatch: expected `{expected}`, found `{found}`")]
    Header { expected: String, found: String },

    #[error("row {row}, column `{column}`: cannot parse `{cell}` as a number")]
    ParseCell {
        row: usize,
        column: String,
        cell: String,
    },

    #[error("timestamps not strictly increasing at row {row}")]
    NonMonotoneTimestamps { row: usize },

    #[error("row {row}: label must be 0 or 1, found {value}")]
    BadLabel { row: usize, value: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("every row was removed by preprocessing")]
    EmptyDataset,

    #[error("class {label} has {count} member(s); at least {needed} required")]
    DegenerateClass {
        label: u8,
        count: usize,
        needed: usize,
    },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("corrupted artifact metadata: {0}")]
    CorruptMeta(String),

    #[error("signal burst of {burst_s:.3} s exceeds the target duration of {target_s:.3} s")]
    BurstTooLong { burst_s: f64, target_s: f64 },

    #[error("clip has {found} samples, at least {needed} required")]
    ClipTooShort { needed: usize, found: usize },

    #[error(
        "image side {side} cannot support {scales} filter scales (need side >= {min_side}); resize first"
    )]
    BelowNyquist {
        side: usize,
        scales: usize,
        min_side: usize,
    },

    #[error("distributions live on different grids")]
    GridMismatch,

    #[error("negative input {0} to a Chisini mean")]
    NegativeInput(f64),

    #[error("zero total variance")]
    ZeroVariance,

    #[error("training data contains a single class")]
    SingleClass,

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("degenerate training data: {0}")]
    Degenerate(String),

    #[error("malformed binary file: {0}")]
    Format(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// Stable identifier for scripts.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
            Error::ColumnCount { .. } => "column-count",
            Error::Header { .. } => "header",
            Error::ParseCell { .. } => "parse-cell",
            Error::NonMonotoneTimestamps { .. } => "non-monotone-timestamps",
            Error::BadLabel { .. } => "bad-label",
            Error::InvalidArgument(_) => "invalid-argument",
            Error::EmptyDataset => "empty-dataset",
            Error::DegenerateClass { .. } => "degenerate-class",
            Error::DimensionMismatch { .. } => "dimension-mismatch",
            Error::NonFinite(_) => "non-finite",
            Error::CorruptMeta(_) => "corrupt-meta",
            Error::BurstTooLong { .. } => "burst-too-long",
            Error::ClipTooShort { .. } => "clip-too-short",
            Error::BelowNyquist { .. } => "below-nyquist",
            Error::GridMismatch => "grid-mismatch",
            Error::NegativeInput(_) => "negative-input",
            Error::ZeroVariance => "zero-variance",
            Error::SingleClass => "single-class",
            Error::NotSymmetric(_) => "not-symmetric",
            Error::Degenerate(_) => "degenerate",
            Error::Format(_) => "format",
        }
    }
}
