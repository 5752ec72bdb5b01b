use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("hurst parameter must lie strictly inside (0, 1), got {0}")]
    InvalidHurst(f64),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid time grid: {0}")]
    InvalidGrid(String),

    #[error("grid of {points} points exceeds the configured cap of {cap}")]
    GridTooLarge { points: usize, cap: usize },

    #[error("cholesky factorization failed even with jitter; smallest eigenvalue {min_eigenvalue:e}")]
    Factorization { min_eigenvalue: f64 },

    #[error("circulant embedding broke down: eigenvalue {value:e} at index {index} (largest {largest:e})")]
    NegativeEigenvalue { index: usize, value: f64, largest: f64 },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("singular design: {0}")]
    Singular(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}

pub(crate) fn parameter(msg: impl Into<String>) -> Error {
    Error::Parameter(msg.into())
}
