use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("grids are not nested: {0}")]
    NotNested(String),

    #[error("Hurst index {0} outside the supported range {1}")]
    HurstOutOfRange(f64, &'static str),

    #[error("covariance matrix is not symmetric at ({row}, {col})")]
    NotSymmetric { row: usize, col: usize },

    #[error("Cholesky factorization broke down at pivot {index} (value {pivot:e})")]
    CholeskyBreakdown { index: usize, pivot: f64 },

    #[error("point ({t}, {x}) lies outside the space-time domain")]
    OutOfDomain { t: f64, x: f64 },

    #[error("solution became non-finite at time {0}")]
    NonFinite(f64),

    #[error("cannot fit a rate: {0}")]
    DegenerateFit(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
