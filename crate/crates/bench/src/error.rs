use thiserror::Error;

pub type Result<T> = std::result::Result<T, BenchError>;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error(transparent)]
    Solver(#[from] issapl_core::Error),

    #[error("invalid plan: {0}")]
    Plan(String),

    #[error("ground truth is zero; relative error undefined")]
    ZeroGroundTruth,

    #[error("malformed results: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
