use thiserror::Error;

use crate::estimation::CoefficientEstimate;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty input: {0}")]
    Empty(String),

    #[error("non-finite value in record {row}: {field}")]
    NonFiniteValue { row: usize, field: String },

    #[error("record {row} has {found} covariates, expected {expected}")]
    InconsistentDimension { row: usize, expected: usize, found: usize },

    #[error("record {row}: delta must be 0 or 1, got {value}")]
    DeltaOutOfRange { row: usize, value: f64 },

    #[error("record {row}: censoring age {c} contradicts u={u}, delta={delta}")]
    CensoringMismatch { row: usize, u: f64, c: f64, delta: u8 },

    #[error("record {row}: {msg}")]
    InvalidRecord { row: usize, msg: String },

    #[error("stratum {0} has no members")]
    EmptyStratum(usize),

    #[error("censoring model has not been fitted")]
    UnfittedModel,

    #[error("no censoring observations to fit")]
    NoCensoringObservations,

    #[error("Newton-Raphson did not converge in {0} iterations")]
    Nonconvergence(usize),

    #[error("information matrix is singular")]
    SingularInformation,

    #[error("jacobian is singular (condition number {0:.3e})")]
    SingularJacobian(f64),

    #[error("no subjects at risk at t0 = {0}")]
    NoAtRiskSubjects(f64),

    #[error("estimating equation did not converge at t0 = {}", .0.t0)]
    FitNonconvergence(Box<CoefficientEstimate>),

    #[error("coefficients diverged (complete separation) at t0 = {}", .0.t0)]
    CompleteSeparation(Box<CoefficientEstimate>),

    #[error("{dropped} of {total} bootstrap replicates failed")]
    TooManyFailures { dropped: usize, total: usize },

    #[error("smoothing needs at least {needed} points, got {got}")]
    InsufficientPoints { needed: usize, got: usize },

    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),

    #[error("empirical variance difference requires both approach A and approach B")]
    RequiresBothApproaches,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("parse error: {0}")]
    Parse(String),
}
