//! Error type shared by all modules.

/// Everything that can go wrong while building or analyzing a model.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Invalid specification or configuration input.
    #[error("configuration: {0}")]
    Config(String),

    /// A request would exceed a hard resource limit (e.g. dense matrix size).
    #[error("resource limit: {0}")]
    Resource(String),

    /// Numerical failure inside a solver or an ill-conditioned computation.
    #[error("numerical: {0}")]
    Numeric(String),

    /// Nonlinear fit failed to converge or was handed degenerate data.
    #[error("fit: {0}")]
    Fit(String),

    /// Not enough samples/bins to perform the requested statistic.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// Spectral cache file is missing, truncated, or fails its integrity check.
    #[error("cache integrity: {0}")]
    Cache(String),

    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization: {0}")]
    Serde(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }
}
