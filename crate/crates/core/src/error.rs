use mmsense_data::DataError;
use mmsense_eval::MetricError;
use mmsense_model::ModelError;
use mmsense_tensor::{ParamStore, TensorError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{stage} diverged at step {step} (loss {loss})")]
    Diverged {
        stage: &'static str,
        step: u64,
        loss: f64,
        /// Parameters after the last finite update.
        last_good: Box<ParamStore<f32>>,
    },
    #[error("frozen parameters changed: {group} hash {before} -> {after}")]
    FrozenChanged {
        group: String,
        before: String,
        after: String,
    },
    #[error("checkpoint does not match the run config: expected {expected}, found {found}")]
    HashMismatch { expected: String, found: String },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("config parse error: {0}")]
    Toml(#[from] toml::de::Error),
}

impl TrainError {
    /// Usage and configuration problems, as opposed to runtime failures.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            TrainError::Config(_) | TrainError::Toml(_) | TrainError::HashMismatch { .. }
        ) || matches!(self, TrainError::Model(ModelError::Config(_)))
            || matches!(self, TrainError::Data(DataError::Config(_)))
    }
}

pub type Result<T, E = TrainError> = std::result::Result<T, E>;
