//! Stage 2: frozen encoders; tokenizer, projector and decoder trained on
//! classification plus next-token loss.

use std::collections::BTreeMap;

use mmsense_data::ModalityKind;
use mmsense_model::{argmax, Arm, Example, Pipeline, PipelineSpec, Prepared};
use mmsense_tensor::ParamStore;

use crate::config::{Group, RunConfig};
use crate::corpus::{Corpus, TextSample};
use crate::error::{Result, TrainError};
use crate::optim::AdamW;
use crate::train::{batch_gradients, group_hash, shuffled, HistoryRow, SampleLoss};

/// Hashes of the frozen groups before and after fine-tuning.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrozenHashes {
    pub universal: (String, String),
    pub tailored: (String, String),
}

pub struct Stage2Output {
    pub pipeline: Pipeline,
    pub store: ParamStore<f32>,
    pub history: Vec<HistoryRow>,
    pub frozen: FrozenHashes,
}

pub fn pipeline_spec(corpus: &Corpus, kind: ModalityKind, arm: Arm, run: &RunConfig) -> Result<PipelineSpec> {
    Ok(PipelineSpec {
        cfg: run.model.resolve()?,
        kind,
        arm,
        payload_shape: corpus.payload_shape(kind),
        classes: corpus.classes(),
        vocab: corpus.data.vocab.tokens().to_vec(),
        seed: corpus.seeds.model,
    })
}

/// Pipeline at its stage-2 starting point: seeded initialisation, tailored
/// weights copied from `stage1`, trainable groups set from the config.
pub fn init_stage2(
    corpus: &Corpus,
    kind: ModalityKind,
    arm: Arm,
    run: &RunConfig,
    stage1: Option<&ParamStore<f32>>,
) -> Result<(Pipeline, ParamStore<f32>)> {
    let mut store = ParamStore::new();
    let pipeline = Pipeline::new(&mut store, pipeline_spec(corpus, kind, arm, run)?)?;
    if arm.uses_tailored() {
        let s1 = stage1.ok_or_else(|| {
            TrainError::Config(format!(
                "the {arm} arm needs a stage-1 checkpoint for {kind}; run stage 1 first"
            ))
        })?;
        let n = store.load_matching(s1, "tailored.")?;
        if n == 0 {
            return Err(TrainError::Config(format!(
                "stage-1 checkpoint has no tailored parameters for {kind}"
            )));
        }
    }
    let trainable: Vec<&str> = run.train.trainable.iter().map(|g| g.prefix()).collect();
    let ids: Vec<_> = store.iter().map(|(id, p)| (id, p.name.clone())).collect();
    for (id, name) in ids {
        let frozen = name.starts_with(Group::Universal.prefix())
            || name.starts_with(Group::Tailored.prefix())
            || !trainable.iter().any(|p| name.starts_with(p));
        store.set_frozen(id, frozen);
    }
    Ok((pipeline, store))
}

/// Prepared inputs for every id in `ids`.
pub fn prepare_all(
    corpus: &Corpus,
    pipeline: &Pipeline,
    store: &ParamStore<f32>,
    ids: &[u64],
) -> Result<BTreeMap<u64, Prepared<f32>>> {
    let mut out = BTreeMap::new();
    for &id in ids {
        let p = corpus.payload(id, pipeline.kind())?;
        out.insert(id, pipeline.prepare(store, &p)?);
    }
    Ok(out)
}

/// Mean-gradient loss of one text sample, as used by the training loop.
pub fn sample_loss(
    pipeline: &Pipeline,
    g: &mut mmsense_tensor::Graph<'_, f32>,
    input: &Prepared<f32>,
    s: &TextSample,
) -> Result<SampleLoss> {
    let ex = Example::with_answer(&s.prompt, &s.answer);
    let out = pipeline.forward(g, input, &ex, None)?;
    let logits = pipeline.decoder.classify(g, out.pooled)?;
    let correct = argmax(&g.value(logits).to_f64_vec()) == s.action;
    let loss = pipeline.decoder.stage2_loss(g, &out, &ex, s.action)?;
    Ok(SampleLoss {
        loss: loss.total,
        correct,
    })
}

pub fn finetune(
    corpus: &Corpus,
    kind: ModalityKind,
    arm: Arm,
    run: &RunConfig,
    stage1: Option<&ParamStore<f32>>,
) -> Result<Stage2Output> {
    let (pipeline, mut store) = init_stage2(corpus, kind, arm, run, stage1)?;
    language_warmup(corpus, &pipeline, &mut store, run)?;
    let before = (group_hash(&store, "universal."), group_hash(&store, "tailored."));
    let ids = &corpus.split.train;
    let inputs = prepare_all(corpus, &pipeline, &store, ids)?;
    let samples = corpus.text_samples(ids, kind, &run.train.tasks)?;
    let sched = &run.schedule.stage2;
    let (micro, acc) = (run.optimizer.micro_batch, run.optimizer.accumulation);
    let mut opt = AdamW::new(run.optimizer.adamw)?;
    let mut history = Vec::new();
    let mut step = 0u64;
    let order: Vec<usize> = (0..samples.len()).collect();
    for epoch in 0..sched.epochs {
        let order = shuffled(&order, corpus.seeds.root, &format!("stage2/{kind}/{arm}/epoch{epoch}"));
        let (mut loss_sum, mut seen, mut correct, mut lr) = (0.0, 0, 0, 0.0);
        for idx in order.chunks(micro * acc) {
            let batch: Vec<&TextSample> = idx.iter().map(|&i| &samples[i]).collect();
            let (grads, stats) = batch_gradients(&store, &batch, micro, |g, s| {
                sample_loss(&pipeline, g, &inputs[&s.id], s)
            })?;
            lr = sched.lr_at(step);
            if !stats.loss_sum.is_finite() {
                return Err(TrainError::Diverged {
                    stage: "stage 2",
                    step,
                    loss: stats.loss_sum,
                    last_good: Box::new(store),
                });
            }
            opt.step(&mut store, &grads, lr)?;
            step += 1;
            loss_sum += stats.loss_sum;
            seen += stats.count;
            correct += stats.correct;
        }
        let loss = loss_sum / seen.max(1) as f64;
        let metric = correct as f64 / seen.max(1) as f64;
        log::info!("stage 2 {kind} {arm} epoch {epoch}: loss {loss:.4} train acc {metric:.3}");
        history.push(HistoryRow {
            step,
            epoch,
            lr,
            loss,
            metric,
        });
    }
    let after = (group_hash(&store, "universal."), group_hash(&store, "tailored."));
    for (group, b, a) in [("universal", &before.0, &after.0), ("tailored", &before.1, &after.1)] {
        if b != a {
            return Err(TrainError::FrozenChanged {
                group: group.into(),
                before: b.clone(),
                after: a.clone(),
            });
        }
    }
    Ok(Stage2Output {
        pipeline,
        store,
        history,
        frozen: FrozenHashes {
            universal: (before.0, after.0),
            tailored: (before.1, after.1),
        },
    })
}

/// Text-only decoder training: the word embeddings of each sequence's caption
/// stand in for the multimodal prefix. Touches the decoder and the final
/// projector MLP only.
pub fn language_warmup(
    corpus: &Corpus,
    pipeline: &Pipeline,
    store: &mut ParamStore<f32>,
    run: &RunConfig,
) -> Result<Vec<HistoryRow>> {
    let kind = pipeline.kind();
    let ids = &corpus.split.train;
    let samples = corpus.text_samples(ids, kind, &run.train.tasks)?;
    let mut prefixes = BTreeMap::new();
    for &id in ids {
        let caption = corpus.text_samples(&[id], kind, &[mmsense_eval::Task::Caption])?;
        prefixes.insert(id, caption[0].answer.clone());
    }
    let sched = &run.schedule.stage2;
    let (micro, acc) = (run.optimizer.micro_batch, run.optimizer.accumulation);
    let mut opt = AdamW::new(run.optimizer.adamw)?;
    let mut history = Vec::new();
    let mut step = 0u64;
    let order: Vec<usize> = (0..samples.len()).collect();
    for epoch in 0..run.train.language_epochs {
        let order = shuffled(&order, corpus.seeds.root, &format!("language/{kind}/epoch{epoch}"));
        let (mut loss_sum, mut seen, mut correct, mut lr) = (0.0, 0, 0, 0.0);
        for idx in order.chunks(micro * acc) {
            let batch: Vec<&TextSample> = idx.iter().map(|&i| &samples[i]).collect();
            let (grads, stats) = batch_gradients(store, &batch, micro, |g, s| {
                let table = pipeline.text_table(g)?;
                let z = pipeline.decoder.embed_text(g, table, &prefixes[&s.id])?;
                let ex = Example::with_answer(&s.prompt, &s.answer);
                let out = pipeline.decoder.decode(g, Some(z), table, &ex.ids, ex.sep)?;
                let logits = pipeline.decoder.classify(g, out.pooled)?;
                let hit = argmax(&g.value(logits).to_f64_vec()) == s.action;
                let loss = pipeline.decoder.stage2_loss(g, &out, &ex, s.action)?;
                Ok(SampleLoss {
                    loss: loss.total,
                    correct: hit,
                })
            })?;
            lr = sched.lr_at(step);
            if !stats.loss_sum.is_finite() {
                return Err(TrainError::Diverged {
                    stage: "language warm-up",
                    step,
                    loss: stats.loss_sum,
                    last_good: Box::new(store.clone()),
                });
            }
            opt.step(store, &grads, lr)?;
            step += 1;
            loss_sum += stats.loss_sum;
            seen += stats.count;
            correct += stats.correct;
        }
        let loss = loss_sum / seen.max(1) as f64;
        let metric = correct as f64 / seen.max(1) as f64;
        log::info!("language warm-up {kind} epoch {epoch}: loss {loss:.4} train acc {metric:.3}");
        history.push(HistoryRow {
            step,
            epoch,
            lr,
            loss,
            metric,
        });
    }
    Ok(history)
}
