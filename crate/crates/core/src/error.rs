use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("solver hit the iteration cap ({iterations}) with residual {residual:.3e}")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("interior formula yields a non-positive weight (min {min_weight:.3e})")]
    InfeasibleInterior { min_weight: f64 },

    #[error("covariance is not invertible (min eigenvalue {min_eigenvalue:.3e})")]
    SingularCovariance { min_eigenvalue: f64 },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid range: {0}")]
    InvalidRange(String),

    #[error("period {period}: {source}")]
    Period {
        period: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("trial {trial}: {source}")]
    Trial {
        trial: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("every candidate failed in the inner forward solve")]
    AllCandidatesFailed,

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("estimator failed on {failed} of {total} bootstrap resamples")]
    EstimatorFailed { failed: usize, total: usize },

    #[error("confidence intervals with different nominal levels")]
    MixedLevels,

    #[error("non-positive value {0} in log-log regression")]
    NonPositiveValue(f64),

    #[error("paired samples: {0}")]
    DegenerateSample(String),

    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    #[error("baseline utility magnitude {0:.3e} is too small to normalize by")]
    DegenerateBaseline(f64),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("non-positive price {price} for {ticker} on line {line}")]
    NonPositivePrice {
        ticker: String,
        line: usize,
        price: f64,
    },

    #[error("dates are not strictly increasing at line {line}")]
    UnsortedDates { line: usize },

    #[error("window {window} needs at least {window} return rows, have {available}")]
    WindowTooLarge { window: usize, available: usize },

    #[error("block {0} contains no return rows")]
    EmptyBlock(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("{failed} of {total} trials failed, above the failure budget")]
    FailureBudget { failed: usize, total: usize },

    #[error("output directory {0} already exists (use --force to overwrite)")]
    OutputExists(PathBuf),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn in_period(self, period: usize) -> Self {
        Error::Period {
            period,
            source: Box::new(self),
        }
    }

    pub(crate) fn in_trial(self, trial: usize) -> Self {
        Error::Trial {
            trial,
            source: Box::new(self),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
