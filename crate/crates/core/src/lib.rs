//! Two-stage training, evaluation and ablation drivers.

pub mod ablation;
pub mod config;
pub mod corpus;
pub mod error;
pub mod evaluate;
pub mod optim;
pub mod run;
pub mod schedule;
pub mod stage1;
pub mod stage2;
pub mod train;

pub use ablation::{ablation_run, comparison_table, run_ablation, Ablation, ArmOutcome, Stage1Cache};
pub use config::{Group, RunConfig};
pub use corpus::{Corpus, Seeds, TextSample};
pub use error::{Result, TrainError};
pub use evaluate::{build_report, diagnostics, evaluate, ModalityScores};
pub use optim::{AdamW, OptimizerConfig};
pub use schedule::{Stage1Schedule, Stage2Schedule};
pub use stage1::{init_stage1, pretrain_tailored, Stage1Output};
pub use stage2::{finetune, init_stage2, FrozenHashes, Stage2Output};
pub use train::{batch_gradients, group_hash, HistoryRow};
