use std::io;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty pool")]
    EmptyPool,
    #[error("empty subset")]
    EmptySubset,
    #[error("invalid size: {0}")]
    InvalidSize(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("hessian too large: p = {p} exceeds cap {cap}")]
    HessianTooLarge { p: usize, cap: usize },
    #[error("singular hessian (min eigenvalue {min_eigenvalue:e})")]
    SingularHessian { min_eigenvalue: f64 },
    #[error("matrix not positive definite (min eigenvalue {min_eigenvalue:e}); increase damping")]
    NotPositiveDefinite { min_eigenvalue: f64 },
    #[error("training diverged at epoch {epoch}")]
    TrainingDiverged { epoch: usize },
    #[error("pool too large: {n} examples exceeds cap {cap}")]
    PoolTooLarge { n: usize, cap: usize },
    #[error("embedding flavor mismatch: {0}")]
    EmbeddingFlavor(String),
    #[error("missing tag for example {0}")]
    MissingTag(usize),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("malformed input: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures caused by the numerics (divergence, singular or
    /// indefinite curvature) rather than by bad input or configuration.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::SingularHessian { .. }
                | Error::NotPositiveDefinite { .. }
                | Error::TrainingDiverged { .. }
                | Error::NonFinite(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
