//! Evaluation metrics and report tables.

pub mod accuracy;
pub mod cluster;
pub mod error;
pub mod meteor;
pub mod report;

pub use accuracy::{accuracy, qa_accuracy};
pub use cluster::{alignment_gap, cluster_separation, cosine_distance, Silhouette};
pub use error::{MetricError, Result};
pub use meteor::{meteor, meteor_tokens, MeteorScore};
pub use report::{Cell, MetricReport, MetricRow, Table, Task};
