//! Error type shared across the crate.

/// Errors produced by validation, parsing and the numerical routines.
#[derive(Debug, thiserror::Error)]
#[non_exhaustive]
pub enum Error {
    #[error("probability {0} is outside [0, 1]")]
    ProbabilityOutOfRange(f64),
    #[error("expected {expected} entries, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("labels must be -1, 0 or +1 (got {0})")]
    InvalidLabel(i64),
    #[error("{0}")]
    InvalidParameter(String),
    #[error("the fixed-point equation has no unique solution for this input")]
    NoUniqueFixedPoint,
    #[error("fixed-point bracket grew past {0:e} without a sign change")]
    SolverDiverged(f64),
    #[error("v = {v} lies below the admissible lower bound v0 = {v0}")]
    BelowAdmissibleRange { v: f64, v0: f64 },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("no ground truth for task {0:?}")]
    MissingTruth(String),
    #[error("truth file references unknown task {0:?}")]
    UnknownTruthTask(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
