//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown label code {0}: expected 1, -1 or -2")]
    UnknownLabelCode(i64),

    #[error(
        "{path}: {bad} of {total} rows malformed (tolerance {allowed}); first at line {first_line}: {first_reason}"
    )]
    MalformedDataset {
        path: String,
        bad: usize,
        total: usize,
        allowed: usize,
        first_line: usize,
        first_reason: String,
    },

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("negative input {0} to exponential binning")]
    NegativeInput(f64),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("no records for year {0}")]
    NoRecordsForYear(i32),

    #[error("insufficient anomaly supply: need {needed}, have {available}")]
    InsufficientAnomalySupply { needed: usize, available: usize },

    #[error("histogram support mismatch: {0} vs {1} bins")]
    SupportMismatch(usize, usize),

    #[error("empty class subset: {0}")]
    EmptyClassSubset(String),

    #[error("too few points: have {have}, need at least {need}")]
    TooFewPoints { have: usize, need: usize },

    #[error("point set of {0} exceeds the supported maximum of {1}")]
    TooManyPoints(usize, usize),

    #[error("k = {k} too large for {n} fitted points")]
    KTooLarge { k: usize, n: usize },

    #[error("mask selects no positions")]
    EmptyMask,

    #[error("teacher/student config mismatch: {0}")]
    ConfigMismatch(String),

    #[error("checkpoint vocabulary hash mismatch: expected {expected}, found {found}")]
    VocabMismatch { expected: String, found: String },

    #[error("scores contain a single class only")]
    SingleClass,

    #[error("malformed file {path}: {reason}")]
    MalformedFile { path: String, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
