//! On-disk workflows behind the command-line tool.
//!
//! ```text
//! <out>/config.toml               snapshot of the effective config
//! <out>/config.sha256             its content hash
//! <out>/stage1/<mod>.ckpt         tailored encoder + head
//! <out>/stage1/<mod>_history.csv
//! <out>/stage2/<arm>/<mod>.ckpt   full pipeline
//! <out>/stage2/<arm>/<mod>_history.csv
//! <out>/eval/<arm>/report.{csv,json}
//! <out>/ablation/table.{csv,json}, <arm>_report.{csv,json}, splits.json
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use mmsense_data::ModalityKind;
use mmsense_eval::{MetricReport, Task};
use mmsense_model::{Arm, Pipeline};
use mmsense_tensor::{checkpoint, ParamStore};

use crate::ablation::{ablation_run, comparison_table, Ablation, Stage1Cache};
use crate::config::RunConfig;
use crate::corpus::Corpus;
use crate::error::{Result, TrainError};
use crate::evaluate::{build_report, evaluate};
use crate::stage1::pretrain_tailored;
use crate::stage2::{finetune, pipeline_spec};
use crate::train::{write_file, write_history};

pub const HASH_KEY: &str = "model_hash";

#[derive(Debug, Clone)]
pub struct OutDir {
    pub root: PathBuf,
}

impl OutDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn stage1_ckpt(&self, kind: ModalityKind) -> PathBuf {
        self.root.join("stage1").join(format!("{}.ckpt", kind.name()))
    }

    pub fn stage2_ckpt(&self, arm: Arm, kind: ModalityKind) -> PathBuf {
        self.root
            .join("stage2")
            .join(arm.name())
            .join(format!("{}.ckpt", kind.name()))
    }

    pub fn eval_dir(&self, arm: Arm) -> PathBuf {
        self.root.join("eval").join(arm.name())
    }

    pub fn ablation_dir(&self) -> PathBuf {
        self.root.join("ablation")
    }
}

/// Writes `config.toml` and `config.sha256` beside the outputs.
pub fn write_snapshot(run: &RunConfig, out: &OutDir) -> Result<()> {
    write_file(out.root.join("config.toml"), &run.to_toml())?;
    write_file(out.root.join("config.sha256"), &format!("{}\n", run.hash()))
}

fn metadata(run: &RunConfig, stage: &str, kind: ModalityKind, arm: Option<Arm>) -> BTreeMap<String, String> {
    let mut m = BTreeMap::new();
    m.insert(HASH_KEY.into(), run.model_hash());
    m.insert("stage".into(), stage.into());
    m.insert("modality".into(), kind.name().into());
    if let Some(a) = arm {
        m.insert("arm".into(), a.name().into());
    }
    m
}

fn save(path: &Path, store: &ParamStore<f32>, meta: &BTreeMap<String, String>) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    Ok(checkpoint::save(path, store, meta)?)
}

/// Loads a checkpoint written for a run with the same data, model and seed.
pub fn load_checked(path: &Path, run: &RunConfig) -> Result<ParamStore<f32>> {
    if !path.exists() {
        return Err(TrainError::Config(format!("missing checkpoint {}", path.display())));
    }
    let ckpt = checkpoint::load::<f32>(path)?;
    let found = ckpt.metadata.get(HASH_KEY).cloned().unwrap_or_default();
    let expected = run.model_hash();
    if found != expected {
        return Err(TrainError::HashMismatch { expected, found });
    }
    Ok(ckpt.into_store())
}

pub fn train_stage1(run: &RunConfig, corpus: &Corpus, out: &OutDir) -> Result<()> {
    for kind in run.modalities()? {
        let s1 = pretrain_tailored(corpus, kind, run)?;
        let path = out.stage1_ckpt(kind);
        save(&path, &s1.store, &metadata(run, "1", kind, None))?;
        write_history(path.with_file_name(format!("{}_history.csv", kind.name())), &s1.history)?;
        log::info!("{kind}: stage-1 validation accuracy {:.3}", s1.val_accuracy);
    }
    Ok(())
}

/// Stage 2 for `arm`, reading stage-1 checkpoints from `out` when needed.
pub fn train_stage2(run: &RunConfig, corpus: &Corpus, arm: Arm, out: &OutDir) -> Result<()> {
    for kind in run.modalities()? {
        let s1 = if arm.uses_tailored() {
            let path = out.stage1_ckpt(kind);
            if !path.exists() {
                return Err(TrainError::Config(format!(
                    "no stage-1 checkpoint at {}; run `train --stage 1` first",
                    path.display()
                )));
            }
            Some(load_checked(&path, run)?)
        } else {
            None
        };
        let s2 = finetune(corpus, kind, arm, run, s1.as_ref())?;
        let path = out.stage2_ckpt(arm, kind);
        save(&path, &s2.store, &metadata(run, "2", kind, Some(arm)))?;
        write_history(path.with_file_name(format!("{}_history.csv", kind.name())), &s2.history)?;
    }
    Ok(())
}

/// Rebuilds a trained pipeline from its stage-2 checkpoint.
pub fn load_pipeline(
    run: &RunConfig,
    corpus: &Corpus,
    arm: Arm,
    kind: ModalityKind,
    out: &OutDir,
) -> Result<(Pipeline, ParamStore<f32>)> {
    let saved = load_checked(&out.stage2_ckpt(arm, kind), run)?;
    let mut store = ParamStore::new();
    let pipeline = Pipeline::new(&mut store, pipeline_spec(corpus, kind, arm, run)?)?;
    let n = store.load_matching(&saved, "")?;
    if n != store.len() {
        return Err(TrainError::Config(format!(
            "checkpoint covers {n} of {} parameters of the {arm} pipeline",
            store.len()
        )));
    }
    Ok((pipeline, store))
}

/// Evaluates `arm` from disk and writes `eval/<arm>/report.{csv,json}`.
pub fn eval_arm(
    run: &RunConfig,
    corpus: &Corpus,
    arm: Arm,
    out: &OutDir,
    tasks: Option<&[Task]>,
) -> Result<MetricReport> {
    let mut per = Vec::new();
    for kind in run.modalities()? {
        let (pipeline, store) = load_pipeline(run, corpus, arm, kind, out)?;
        per.push((kind, evaluate(&pipeline, &store, corpus, run)?));
    }
    let mut report = build_report(corpus, run, &per)?;
    if let Some(t) = tasks {
        report.restrict(t);
    }
    report.write(out.eval_dir(arm), "report")?;
    Ok(report)
}

/// Full three-arm comparison; writes the table, per-arm reports and split hashes.
pub fn ablate(run: &RunConfig, out: &OutDir) -> Result<Ablation> {
    let corpus = Corpus::build(run)?;
    let cache = Stage1Cache::train(&corpus, run)?;
    let mut arms = Vec::new();
    for &arm in &run.train.arms {
        arms.push(ablation_run(&corpus, run, arm, &cache)?);
    }
    let table = comparison_table(&arms)?;
    let dir = out.ablation_dir();
    table.write(&dir, "table")?;
    let mut splits = BTreeMap::new();
    for a in &arms {
        a.report.write(&dir, &format!("{}_report", a.arm.name()))?;
        splits.insert(a.arm.name(), a.split_hash.clone());
    }
    write_file(
        dir.join("splits.json"),
        &(serde_json::to_string_pretty(&splits).expect("map serialises") + "\n"),
    )?;
    Ok(Ablation { arms, table })
}
