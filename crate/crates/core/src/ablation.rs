//! The three-arm comparison: identical data, seeds and budgets per arm.

use std::collections::BTreeMap;

use mmsense_data::ModalityKind;
use mmsense_eval::{MetricReport, Table, Task};
use mmsense_model::Arm;
use mmsense_tensor::ParamStore;

use crate::config::RunConfig;
use crate::corpus::Corpus;
use crate::error::Result;
use crate::evaluate::{build_report, evaluate, ModalityScores};
use crate::stage1::{pretrain_tailored, Stage1Output};
use crate::stage2::finetune;

/// Tasks shown in the comparison table.
pub const TABLE_TASKS: [Task; 3] = [Task::Recognition, Task::Qa, Task::Caption];

/// Stage-1 results per modality, shared by the arms that use them.
#[derive(Default)]
pub struct Stage1Cache {
    pub outputs: BTreeMap<ModalityKind, Stage1Output>,
}

impl Stage1Cache {
    pub fn train(corpus: &Corpus, run: &RunConfig) -> Result<Self> {
        let mut outputs = BTreeMap::new();
        for kind in run.modalities()? {
            outputs.insert(kind, pretrain_tailored(corpus, kind, run)?);
        }
        Ok(Self { outputs })
    }

    pub fn store(&self, kind: ModalityKind) -> Option<&ParamStore<f32>> {
        self.outputs.get(&kind).map(|o| &o.store)
    }
}

#[derive(Debug, Clone)]
pub struct ArmOutcome {
    pub arm: Arm,
    pub report: MetricReport,
    /// Hash of the full split assignment this arm was trained and tested on.
    pub split_hash: String,
    pub test_hash: String,
}

/// Stage 2 and evaluation of `arm` on every configured modality.
pub fn ablation_run(corpus: &Corpus, run: &RunConfig, arm: Arm, stage1: &Stage1Cache) -> Result<ArmOutcome> {
    let mut per_modality: Vec<(ModalityKind, ModalityScores)> = Vec::new();
    for kind in run.modalities()? {
        let s1 = if arm.uses_tailored() { stage1.store(kind) } else { None };
        let out = finetune(corpus, kind, arm, run, s1)?;
        per_modality.push((kind, evaluate(&out.pipeline, &out.store, corpus, run)?));
    }
    Ok(ArmOutcome {
        arm,
        report: build_report(corpus, run, &per_modality)?,
        split_hash: corpus.split.hash(),
        test_hash: corpus.split.test_hash(),
    })
}

pub struct Ablation {
    pub arms: Vec<ArmOutcome>,
    pub table: Table,
}

/// Runs stage 1 once, then every configured arm.
pub fn run_ablation(run: &RunConfig) -> Result<Ablation> {
    let corpus = Corpus::build(run)?;
    let needs_stage1 = run.train.arms.iter().any(|a| a.uses_tailored());
    let cache = if needs_stage1 {
        Stage1Cache::train(&corpus, run)?
    } else {
        Stage1Cache::default()
    };
    let mut arms = Vec::new();
    for &arm in &run.train.arms {
        arms.push(ablation_run(&corpus, run, arm, &cache)?);
    }
    let table = comparison_table(&arms)?;
    Ok(Ablation { arms, table })
}

/// Rows `Baseline`, `+TailorEncoder`, `+UMIP`; columns `task/MOD` and
/// `task/Avg` for recognition, QA and caption.
pub fn comparison_table(arms: &[ArmOutcome]) -> Result<Table> {
    let Some(first) = arms.first() else {
        return Ok(Table::new(Vec::new()));
    };
    let mut columns = Vec::new();
    for task in TABLE_TASKS {
        if first.report.row(task).is_none() {
            continue;
        }
        for m in &first.report.modalities {
            columns.push(format!("{task}/{}", m.short()));
        }
        columns.push(format!("{task}/Avg"));
    }
    let mut table = Table::new(columns);
    for a in arms {
        let mut values = Vec::new();
        for task in TABLE_TASKS {
            if let Some(row) = a.report.row(task) {
                values.extend(row.cells.iter().map(|c| c.score));
                values.push(row.avg);
            }
        }
        table.push(a.arm.label(), values)?;
    }
    Ok(table)
}
