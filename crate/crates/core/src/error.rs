use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("unsupported coupling law: {0}")]
    UnsupportedLaw(String),

    #[error("quadrature error estimate {estimate:e} exceeds tolerance {tolerance:e}")]
    QuadratureFailure { estimate: f64, tolerance: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("system size {n} exceeds limit {limit}")]
    SizeExceeded { n: usize, limit: usize },

    #[error("non-finite coupling {value} at position {position}")]
    NonFiniteCoupling { position: usize, value: f64 },

    #[error("moment mismatch: {0}")]
    MomentMismatch(String),

    #[error("unsupported model: {0}")]
    UnsupportedModel(String),

    #[error("models cannot share randomness: {0}")]
    IncompatibleCoupling(String),

    #[error("invalid config: {0}")]
    ConfigInvalid(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
