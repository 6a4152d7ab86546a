use thiserror::Error;

#[derive(Debug, Error)]
pub enum KastError {
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("invalid data: {0}")]
    InvalidData(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("unknown attribute key `{key}`; available: {available}")]
    UnknownKey { key: String, available: String },
    #[error("unknown id: {0}")]
    UnknownId(String),
    #[error("empty session")]
    EmptySession,
    #[error("training diverged at epoch {epoch}: non-finite loss")]
    Diverged { epoch: usize },
    #[error(transparent)]
    Tensor(#[from] kast_autodiff::TensorError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, KastError>;
