use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("singular system: {0}")]
    Singular(String),

    #[error("component {index} collapsed to zero norm (step size too large?)")]
    ComponentCollapse { index: usize },

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("diverged: loss {loss} at step {step}")]
    Diverged { loss: f64, step: usize },

    #[error("dimension guard exceeded: d^l = {entries} > {limit}")]
    DimensionGuard { entries: usize, limit: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
