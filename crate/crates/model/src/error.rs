use mmsense_data::DataError;
use mmsense_tensor::TensorError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("config error: {0}")]
    Config(String),
    #[error("payload error: {0}")]
    Payload(String),
    #[error("sequence of {len} tokens exceeds the decoder limit of {max}")]
    TooLong { len: usize, max: usize },
    #[error(transparent)]
    Data(#[from] DataError),
}

pub type Result<T, E = ModelError> = std::result::Result<T, E>;
