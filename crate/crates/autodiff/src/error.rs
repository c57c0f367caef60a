use thiserror::Error;

#[derive(Debug, Error)]
pub enum AutodiffError {
    /// Rejected input: operand shapes do not line up.
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("training diverged: {0}")]
    Divergence(String),
    #[error("unsupported construction: {0}")]
    Unsupported(String),
    #[error("network is frozen; parameters cannot be updated")]
    Frozen,
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
