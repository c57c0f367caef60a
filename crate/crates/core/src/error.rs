use lwail_autodiff::AutodiffError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LwailError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("data unavailable: {0}")]
    Unavailable(String),
    #[error("{stage} diverged at step {step}: {msg}")]
    Divergence { stage: String, step: u64, msg: String },
    #[error("usage error: {0}")]
    Usage(String),
    #[error("generation failed: {0}")]
    Generation(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numerical error: {0}")]
    Numerical(String),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl LwailError {
    /// Attaches a stage label and step index to divergence-like failures.
    pub fn in_stage(self, stage: &str, step: u64) -> Self {
        match self {
            LwailError::Autodiff(AutodiffError::Divergence(msg)) | LwailError::Numerical(msg) => {
                LwailError::Divergence { stage: stage.to_string(), step, msg }
            }
            LwailError::Divergence { stage: inner, step, msg } => LwailError::Divergence {
                stage: format!("{stage}/{inner}"),
                step,
                msg,
            },
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, LwailError>;
