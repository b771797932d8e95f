use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("state dimension {requested} exceeds the configured maximum {max}")]
    Capacity { requested: usize, max: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("register index {index} out of range for {count} registers")]
    RegisterOutOfRange { index: usize, count: usize },

    #[error("operator is not an isometry on this state (norm after apply = {norm})")]
    NonIsometry { norm: f64 },

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("{name} = {value} is outside {range}")]
    Domain { name: &'static str, value: f64, range: &'static str },

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("mean reuse number diverges at R = 1")]
    Divergence,
}

pub type Result<T> = std::result::Result<T, Error>;
