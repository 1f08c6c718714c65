use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid group partition: {0}")]
    InvalidPartition(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("group index {index} out of range for {groups} groups")]
    InvalidGroupIndex { index: usize, groups: usize },

    #[error("phi'(t) is undefined at t = {0} (requires t > 0)")]
    NonPositiveArgument(f64),

    #[error("group {0} is in the support but has zero norm")]
    ZeroNormGroup(usize),

    #[error("{what} did not converge after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("factorization failed: {0}")]
    Factorization(String),

    #[error("sensing matrix is rank deficient")]
    RankDeficient,

    #[error("internal invariant violated: {0}")]
    Internal(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
