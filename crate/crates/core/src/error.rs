use thiserror::Error;

/// Errors raised across the crate. Variants follow the failure classes of
/// the individual components (shape checks, numerics, configuration, ...).
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("usage error: {0}")]
    Usage(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("model error: {0}")]
    Model(String),
    #[error("capacity error: {0}")]
    Capacity(String),
    #[error("convergence error: {0}")]
    Convergence(String),
    #[error("format error: {0}")]
    Format(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
