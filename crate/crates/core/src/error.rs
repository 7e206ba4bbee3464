use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("shape mismatch: {0}")]
    Mismatch(String),

    #[error("diffusion coefficient {value} outside [0, {kappa}] at step {step}, component {component}")]
    DiffusionBound {
        step: usize,
        component: usize,
        value: f64,
        kappa: f64,
    },

    #[error("certification failed: {0}")]
    Certification(String),

    #[error("no convergence after {iterations} iterations (last residual {residual:e})")]
    NonConvergence {
        iterations: usize,
        residual: f64,
        /// Trailing iterate history, most recent last.
        history: Vec<f64>,
    },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}

pub(crate) fn mismatch(msg: impl Into<String>) -> Error {
    Error::Mismatch(msg.into())
}
