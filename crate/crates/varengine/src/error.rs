use thiserror::Error;

/// Errors produced by the estimation and backtesting engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid window plan: {0}")]
    InvalidPlan(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("insufficient sample: {0}")]
    InsufficientSample(String),

    #[error("invalid GARCH specification: {0}")]
    InvalidSpec(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("invalid network parameters: {0}")]
    InvalidParams(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("non-finite loss: {0}")]
    NonFiniteLoss(String),

    #[error("model persistence: {0}")]
    Persistence(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
