use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("manifest error: {0}")]
    Manifest(String),
    #[error("split error: {0}")]
    Split(String),
    #[error("curation error: {0}")]
    Curation(String),
    #[error("payload format error: {0}")]
    Format(String),
    #[error("vocab error: {0}")]
    Vocab(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("line {line}: {msg}")]
    Line { line: usize, msg: String },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = DataError> = std::result::Result<T, E>;
