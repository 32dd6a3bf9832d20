use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dataset is empty")]
    EmptyDataset,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite value at row {row}, column {column}")]
    NonFinite { row: usize, column: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parse error at line {line}, column `{column}`: {message}")]
    Parse {
        line: usize,
        column: String,
        message: String,
    },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("metric `{0}` is undefined for this data")]
    UndefinedMetric(&'static str),

    #[error("correlation matrix is not positive semi-definite (pivot {pivot} = {value:.3e})")]
    NotPositiveSemiDefinite { pivot: usize, value: f64 },

    #[error("{features} features is too many for exact subset enumeration (max {max}); use shap_sampled")]
    TooManyFeatures { features: usize, max: usize },

    #[error("candidate model depends on the protected attribute")]
    CandidateDependsOnProtected,

    #[error("unknown protected level {0:?}")]
    UnknownLevel(Vec<f64>),

    #[error("pipeline has a cyclic dependency involving column {0}")]
    CyclicDependency(usize),

    #[error("objective is flat: {0}")]
    FlatObjective(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
