use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix is not positive definite (pivot {pivot} at row {row})")]
    NotPositiveDefinite { row: usize, pivot: f64 },

    #[error("matrix is not positive semi-definite (eigenvalue {eigenvalue})")]
    NotPsd { eigenvalue: f64 },

    #[error("observation list is empty")]
    EmptyObservations,

    #[error("alpha_t = {0} outside the admissible range")]
    InvalidAlpha(f64),

    #[error("time {t} outside [{t_clamp}, 1]")]
    TimeOutOfRange { t: f64, t_clamp: f64 },

    #[error("score field returned a non-finite value at t = {t}")]
    NonFiniteScore { t: f64 },

    #[error("need at least {needed} samples, got {found}")]
    TooFewSamples { needed: usize, found: usize },

    #[error(
        "aggregation matrix is singular (min |eigenvalue| {min_abs_eigenvalue:e}, norm {norm:e})"
    )]
    SingularLambda { min_abs_eigenvalue: f64, norm: f64 },

    #[error("eta = {eta} must lie in (0, {max})")]
    EtaOutOfRange { eta: f64, max: f64 },

    #[error("gamma * ||inv|| = {0} is not below 1")]
    GammaTooLarge(f64),

    #[error("bound assumption violated: {0}")]
    AssumptionViolated(String),

    #[error("this experiment requires dim = 2, got {0}")]
    RequiresDim2(usize),

    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}
