use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("matrix is not positive definite even with maximum jitter")]
    NotPositiveDefinite,

    #[error("output {output} is constant, cannot normalize")]
    ConstantSeries { output: usize },

    #[error("too few samples: need at least {needed}, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("too few paired samples: need at least 3, got {0}")]
    TooFewPairs(usize),

    #[error("all {restarts} optimizer runs failed")]
    OptimizerDiverged { restarts: usize },

    #[error("zero denominator: vh + vv = 0")]
    ZeroDenominator,

    #[error("reference values are constant")]
    ConstantReference,

    #[error("invalid scenario config: {0}")]
    InvalidConfig(String),

    #[error("holdout time {0} is not present in output 1")]
    HoldoutNotFound(f64),

    #[error("holdout list is empty, nothing to assess")]
    EmptyHoldout,

    #[error("unsupported model file version {0}")]
    UnknownVersion(String),

    #[error("{0}")]
    WrongModelKind(String),

    #[error("{path}: line {line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Process exit code: 1 for computation failures, 2 for usage and file errors.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NotPositiveDefinite
            | Error::ConstantSeries { .. }
            | Error::TooFewSamples { .. }
            | Error::TooFewPairs(_)
            | Error::OptimizerDiverged { .. }
            | Error::ZeroDenominator
            | Error::ConstantReference => 1,
            _ => 2,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
