//! Run configuration (TOML) and its content hash.
//!
//! ```toml
//! [data]
//! preset = "desk"
//! setting = "cross-env"
//! modalities = ["video", "mmwave", "wifi"]
//!
//! [model]
//! preset = "desk"
//!
//! [optimizer]
//! micro_batch = 8
//!
//! [schedule.stage1]
//! epochs = 30
//!
//! [seed]
//! root = 7
//! ```
//!
//! Every field has a default, so any subset of sections may be given.

use std::path::Path;

use mmsense_data::{DatasetSpec, ModalityKind, Setting};
use mmsense_eval::Task;
use mmsense_model::{Arm, ModelConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Result, TrainError};
use crate::optim::OptimizerConfig;
use crate::schedule::{Stage1Schedule, Stage2Schedule};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// `desk`, `mmfi` or `xrf55`.
    pub preset: String,
    pub setting: Setting,
    /// Empty means every modality of the preset.
    pub modalities: Vec<ModalityKind>,
    /// Multiplier on the generator's per-modality noise levels.
    pub noise: f32,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            preset: "desk".into(),
            setting: Setting::CrossEnv,
            modalities: Vec::new(),
            noise: 1.0,
        }
    }
}

impl DataConfig {
    pub fn spec(&self) -> Result<DatasetSpec> {
        let mut spec = DatasetSpec::preset(&self.preset)?;
        if !self.modalities.is_empty() {
            spec.modalities = self.modalities.clone();
        }
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    /// `desk`, `full-mmfi`, `full-xrf55` or `custom`.
    pub preset: String,
    /// Full model configuration, required when `preset = "custom"`.
    pub custom: Option<ModelConfig>,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            preset: "desk".into(),
            custom: None,
        }
    }
}

impl ModelSection {
    pub fn resolve(&self) -> Result<ModelConfig> {
        let cfg = match (self.preset.as_str(), &self.custom) {
            ("custom", Some(c)) => c.clone(),
            ("custom", None) => {
                return Err(TrainError::Config(
                    "model preset `custom` needs a [model.custom] table".into(),
                ))
            }
            (name, None) => ModelConfig::preset(name)?,
            (name, Some(_)) => {
                return Err(TrainError::Config(format!(
                    "[model.custom] given with preset `{name}`; use preset = \"custom\""
                )))
            }
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerSection {
    #[serde(flatten)]
    pub adamw: OptimizerConfig,
    pub micro_batch: usize,
    /// Micro-batches per optimizer step.
    pub accumulation: usize,
}

impl Default for OptimizerSection {
    fn default() -> Self {
        Self {
            adamw: OptimizerConfig::default(),
            micro_batch: 8,
            accumulation: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleSection {
    pub stage1: Stage1Schedule,
    pub stage2: Stage2Schedule,
}

impl ScheduleSection {
    /// Full-scale schedule shape compressed to desk budgets: 30 stage-1 epochs
    /// with warmup and decays at the same fractions of the run.
    pub fn desk() -> Self {
        Self {
            stage1: Stage1Schedule {
                base_lr: 3e-3,
                warmup_epochs: 3,
                milestones: vec![15, 25],
                factor: 0.1,
                epochs: 30,
            },
            stage2: Stage2Schedule {
                max_lr: 1e-3,
                warmup_steps: 10,
                epochs: 5,
            },
        }
    }
}

/// Parameter groups that may be trained in stage 2.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Group {
    Tokenizer,
    Universal,
    Tailored,
    Projector,
    Decoder,
}

impl Group {
    pub fn prefix(self) -> &'static str {
        match self {
            Group::Tokenizer => "tokenizer.",
            Group::Universal => "universal.",
            Group::Tailored => "tailored.",
            Group::Projector => "projector.",
            Group::Decoder => "decoder.",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    /// Stage-2 trainable groups. Universal and tailored are rejected.
    pub trainable: Vec<Group>,
    /// Fraction of the training split held out for stage-1 validation.
    pub val_fraction: f64,
    /// Stage-2 text tasks.
    pub tasks: Vec<Task>,
    pub arms: Vec<Arm>,
    /// Text-only decoder epochs before stage 2; 0 disables.
    pub language_epochs: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            trainable: vec![Group::Tokenizer, Group::Projector, Group::Decoder],
            val_fraction: 0.1,
            tasks: vec![Task::Qa, Task::Caption],
            arms: Arm::ALL.to_vec(),
            language_epochs: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub tasks: Vec<Task>,
    /// Caption generation limit; QA answers are capped by the longest category name.
    pub max_caption_tokens: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            tasks: Task::ALL.to_vec(),
            max_caption_tokens: 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SeedSection {
    pub root: u64,
}

impl Default for SeedSection {
    fn default() -> Self {
        Self { root: 7 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataConfig,
    pub model: ModelSection,
    pub optimizer: OptimizerSection,
    pub schedule: ScheduleSection,
    pub train: TrainSection,
    pub eval: EvalSection,
    pub seed: SeedSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl RunConfig {
    pub fn desk() -> Self {
        Self {
            data: DataConfig::default(),
            model: ModelSection::default(),
            optimizer: OptimizerSection::default(),
            schedule: ScheduleSection::desk(),
            train: TrainSection::default(),
            eval: EvalSection::default(),
            seed: SeedSection::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg = Self::from_toml_unchecked(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parses without [`validate`](Self::validate), for callers that apply
    /// overrides first.
    pub fn from_toml_unchecked(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serialises")
    }

    pub fn validate(&self) -> Result<()> {
        self.data.spec()?;
        self.model.resolve()?;
        self.optimizer.adamw.validate()?;
        if self.optimizer.micro_batch == 0 || self.optimizer.accumulation == 0 {
            return Err(TrainError::Config(
                "micro_batch and accumulation must be positive".into(),
            ));
        }
        self.schedule.stage1.validate()?;
        self.schedule.stage2.validate()?;
        if let Some(g) = self
            .train
            .trainable
            .iter()
            .find(|g| matches!(g, Group::Universal | Group::Tailored))
        {
            return Err(TrainError::Config(format!(
                "`{}` parameters are frozen in stage 2 and cannot be listed as trainable",
                g.prefix().trim_end_matches('.')
            )));
        }
        if !(0.0..1.0).contains(&self.train.val_fraction) {
            return Err(TrainError::Config(format!(
                "val_fraction {} outside [0, 1)",
                self.train.val_fraction
            )));
        }
        if let Some(t) = self.train.tasks.iter().find(|t| !matches!(t, Task::Qa | Task::Caption)) {
            return Err(TrainError::Config(format!("`{t}` is not a stage-2 text task")));
        }
        if self.train.arms.is_empty() {
            return Err(TrainError::Config("no arms configured".into()));
        }
        Ok(())
    }

    /// Modalities actually used.
    pub fn modalities(&self) -> Result<Vec<ModalityKind>> {
        Ok(self.data.spec()?.modalities)
    }

    /// SHA-256 over the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("run config serialises");
        hex::encode(Sha256::digest(json))
    }

    /// Hash of the fields a checkpoint depends on: data, model and seed.
    pub fn model_hash(&self) -> String {
        let json = serde_json::to_vec(&(&self.data, &self.model, &self.seed)).expect("serialises");
        hex::encode(Sha256::digest(json))
    }
}
