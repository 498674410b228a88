//! Encoders, projectors and the decoder of the multimodal pipeline.

pub mod blocks;
pub mod config;
pub mod decoder;
pub mod error;
pub mod pipeline;
pub mod projector;
pub mod tailored;
pub mod tokenize;
pub mod universal;

pub use config::ModelConfig;
pub use decoder::{DecodeOut, Decoder, DecoderConfig, Example, Stage2Loss};
pub use error::{ModelError, Result};
pub use pipeline::{argmax, Arm, Pipeline, PipelineSpec, Prediction, Prepared, Stage1Model, GROUPS};
pub use projector::{Projector, QFormer, Umip};
pub use tailored::{Stage1Head, TailoredEncoder};
pub use tokenize::{TokenGrid, TokenLayout, Tokenizer};
pub use universal::{text_anchor_embed, word_vector, Anchor, UniversalEncoder};
