use thiserror::Error;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("infeasible configuration: {0}")]
    InfeasibleConfig(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("division by zero: {0}")]
    DivisionByZero(&'static str),

    #[error("non-finite value produced during {stage}")]
    NonFinite { stage: String },

    #[error("solver did not converge after {iterations} iterations (stationarity {stationarity:.3e}, gap {gap:.3e})")]
    SolverNonConvergence {
        iterations: usize,
        stationarity: f64,
        gap: f64,
    },

    #[error("not applicable: {0}")]
    NotApplicable(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
