//! Test-split evaluation of one trained pipeline and report assembly.

use std::collections::BTreeMap;

use mmsense_data::ModalityKind;
use mmsense_eval::{alignment_gap, cluster_separation, meteor, qa_accuracy, Cell, MetricReport, Task};
use mmsense_model::{text_anchor_embed, Pipeline, Prepared};
use mmsense_tensor::ParamStore;

use crate::config::RunConfig;
use crate::corpus::Corpus;
use crate::error::Result;
use crate::stage2::prepare_all;

/// Scores of one modality, keyed by task, with sample counts.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ModalityScores {
    pub scores: BTreeMap<Task, (f64, usize)>,
}

impl ModalityScores {
    pub fn get(&self, task: Task) -> Option<f64> {
        self.scores.get(&task).map(|s| s.0)
    }
}

/// Pooled multimodal tokens and labels of `ids`.
pub fn pooled_tokens(
    pipeline: &Pipeline,
    store: &ParamStore<f32>,
    inputs: &BTreeMap<u64, Prepared<f32>>,
    corpus: &Corpus,
) -> Result<(Vec<Vec<f64>>, Vec<usize>)> {
    let mut points = Vec::with_capacity(inputs.len());
    let mut labels = Vec::with_capacity(inputs.len());
    for (&id, input) in inputs {
        points.push(pipeline.pooled_tokens(store, input)?);
        labels.push(corpus.action(id)?);
    }
    Ok((points, labels))
}

/// Class-name anchors in token space.
pub fn class_anchors(pipeline: &Pipeline, store: &ParamStore<f32>, corpus: &Corpus) -> Result<Vec<Vec<f64>>> {
    let d = pipeline.spec.cfg.d_m;
    let raw: Vec<Vec<f64>> = corpus
        .categories()
        .iter()
        .map(|c| text_anchor_embed(pipeline.spec.seed, d, c).vector)
        .collect();
    Ok(pipeline.project_anchors(store, &raw)?)
}

/// Silhouette and alignment gap of the pooled tokens of `ids`.
pub fn diagnostics(pipeline: &Pipeline, store: &ParamStore<f32>, corpus: &Corpus, ids: &[u64]) -> Result<(f64, f64)> {
    let inputs = prepare_all(corpus, pipeline, store, ids)?;
    let (points, labels) = pooled_tokens(pipeline, store, &inputs, corpus)?;
    let sil = cluster_separation(&points, &labels)?.score;
    let anchors = class_anchors(pipeline, store, corpus)?;
    let gap = alignment_gap(&points, &labels, &anchors)?;
    Ok((sil, gap))
}

/// Every requested task on the test split.
pub fn evaluate(
    pipeline: &Pipeline,
    store: &ParamStore<f32>,
    corpus: &Corpus,
    run: &RunConfig,
) -> Result<ModalityScores> {
    let kind = pipeline.kind();
    let ids = &corpus.split.test;
    let tasks = &run.eval.tasks;
    let inputs = prepare_all(corpus, pipeline, store, ids)?;
    let vocab = &corpus.data.vocab;
    let mut scores = ModalityScores::default();
    let wants = |t: Task| tasks.contains(&t);
    if wants(Task::Recognition) || wants(Task::Qa) {
        let qa = corpus.text_samples(ids, kind, &[Task::Qa])?;
        let max_new = corpus.max_answer_tokens()? + 1;
        let (mut hits, mut generated, mut answers) = (0, Vec::new(), Vec::new());
        for s in &qa {
            let p = pipeline.predict(
                store,
                &inputs[&s.id],
                &s.prompt,
                if wants(Task::Qa) { max_new } else { 0 },
            )?;
            hits += usize::from(p.action == s.action);
            generated.push(vocab.decode(&p.answer)?);
            answers.push(s.reference.clone());
        }
        if wants(Task::Recognition) {
            scores
                .scores
                .insert(Task::Recognition, (hits as f64 / qa.len() as f64, qa.len()));
        }
        if wants(Task::Qa) {
            scores
                .scores
                .insert(Task::Qa, (qa_accuracy(&generated, &answers)?, qa.len()));
        }
    }
    if wants(Task::Caption) {
        let caps = corpus.text_samples(ids, kind, &[Task::Caption])?;
        let mut total = 0.0;
        for s in &caps {
            let p = pipeline.predict(store, &inputs[&s.id], &s.prompt, run.eval.max_caption_tokens)?;
            total += meteor(&vocab.decode(&p.answer)?, &s.reference).score;
        }
        scores
            .scores
            .insert(Task::Caption, (total / caps.len() as f64, caps.len()));
    }
    if wants(Task::Silhouette) || wants(Task::AlignmentGap) {
        let (points, labels) = pooled_tokens(pipeline, store, &inputs, corpus)?;
        if wants(Task::Silhouette) {
            let s = cluster_separation(&points, &labels)?;
            scores.scores.insert(Task::Silhouette, (s.score, s.points));
        }
        if wants(Task::AlignmentGap) {
            let anchors = class_anchors(pipeline, store, corpus)?;
            scores.scores.insert(
                Task::AlignmentGap,
                (alignment_gap(&points, &labels, &anchors)?, points.len()),
            );
        }
    }
    Ok(scores)
}

/// One report over modalities in `per_modality` order.
pub fn build_report(
    corpus: &Corpus,
    run: &RunConfig,
    per_modality: &[(ModalityKind, ModalityScores)],
) -> Result<MetricReport> {
    let kinds: Vec<ModalityKind> = per_modality.iter().map(|(k, _)| *k).collect();
    let mut report = MetricReport::new(&corpus.data.spec.name, run.data.setting.name(), &run.hash(), &kinds);
    for &task in &Task::ALL {
        let cells: Vec<Cell> = per_modality
            .iter()
            .filter_map(|(k, s)| {
                s.scores.get(&task).map(|&(score, count)| Cell {
                    modality: *k,
                    score,
                    count,
                })
            })
            .collect();
        if cells.len() == per_modality.len() && !cells.is_empty() {
            report.push(task, cells)?;
        }
    }
    Ok(report)
}
