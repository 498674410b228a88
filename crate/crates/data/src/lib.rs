//! Dataset presets, benchmark splits, payload and manifest formats, QA and
//! caption curation, and a synthetic multimodal sensing generator.

pub mod curation;
pub mod dataset;
pub mod error;
pub mod manifest;
pub mod modality;
pub mod payload;
pub mod split;
pub mod synth;
pub mod text;
pub mod vocab;

pub use dataset::{DatasetSpec, Geometry, SubjectSpec};
pub use error::{DataError, Result};
pub use manifest::{Manifest, ManifestEntry};
pub use modality::{Family, ModalityKind};
pub use payload::{ModalitySample, Payload};
pub use split::{split, HeldOut, Setting, SplitAssignment};
pub use synth::{generate_synthetic, Generator, NoiseProfile, SyntheticDataset};
pub use vocab::Vocab;
