use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{kind} id {id} out of range (table has {len} rows)")]
    IdOutOfRange {
        kind: &'static str,
        id: usize,
        len: usize,
    },

    #[error("invalid target {0} for a logistic head (expected 0 or 1)")]
    InvalidTarget(f64),

    #[error("record has no binary label")]
    MissingLabel,

    #[error("batch is empty")]
    EmptyBatch,

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid architecture: {0}")]
    InvalidArch(String),

    #[error("invalid training config: {0}")]
    InvalidTrainConfig(String),

    #[error("removed sample is not a member of the batch")]
    NotInBatch,

    #[error("batch needs at least 2 samples, got {0}")]
    BatchTooSmall(usize),

    #[error("cannot keep {k} of {n} samples")]
    KTooLarge { k: usize, n: usize },

    #[error("score of sample {0} is not finite")]
    NonFiniteScore(usize),

    #[error("incremental block is empty")]
    EmptyIncrement,

    #[error("reservoir capacity {capacity} exceeded by {size} records")]
    CapacityExceeded { capacity: usize, size: usize },

    #[error("rating {0} is outside the labeling rule's domain")]
    InvalidRating(f64),

    #[error("need at least {needed} records, got {got}")]
    TooFewRecords { needed: usize, got: usize },

    #[error("unexpected header {found:?}, expected {expected:?}")]
    HeaderMismatch { expected: String, found: String },

    #[error(
        "{malformed} of {total} lines malformed in {path} (first at line {first_line}: {reason})"
    )]
    TooManyMalformed {
        path: PathBuf,
        malformed: usize,
        total: usize,
        first_line: usize,
        reason: String,
    },

    #[error("vectors have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),

    #[error("AUC is undefined without both classes present")]
    UndefinedAuc,

    #[error("scheme {0} is unavailable here: {1}")]
    SchemeUnavailable(char, String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("study too large: {0}")]
    TooLarge(String),

    #[error("sample {index}: {source}")]
    AtSample {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("stage {stage}: {source}")]
    AtStage {
        stage: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn at_sample(self, index: usize) -> Self {
        Error::AtSample {
            index,
            source: Box::new(self),
        }
    }

    pub(crate) fn at_stage(self, stage: usize) -> Self {
        Error::AtStage {
            stage,
            source: Box::new(self),
        }
    }
}
