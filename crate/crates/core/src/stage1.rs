//! Stage 1: tailored encoder plus linear head trained with cross-entropy.

use mmsense_data::{ModalityKind, Payload};
use mmsense_model::{argmax, ModelConfig, Stage1Model};
use mmsense_tensor::{Graph, ParamStore};

use crate::config::RunConfig;
use crate::corpus::Corpus;
use crate::error::{Result, TrainError};
use crate::optim::AdamW;
use crate::train::{batch_gradients, shuffled, HistoryRow, SampleLoss};

pub struct Stage1Output {
    pub kind: ModalityKind,
    pub model: Stage1Model,
    pub store: ParamStore<f32>,
    /// One row per epoch.
    pub history: Vec<HistoryRow>,
    /// Validation accuracy after the last epoch (training accuracy when the
    /// validation set is empty).
    pub val_accuracy: f64,
}

struct Item {
    payload: Payload,
    action: usize,
}

fn accuracy(model: &Stage1Model, store: &ParamStore<f32>, items: &[Item]) -> Result<f64> {
    if items.is_empty() {
        return Ok(f64::NAN);
    }
    let mut hits = 0;
    for it in items {
        let mut g = Graph::inference(store);
        let l = model.logits(&mut g, &it.payload)?;
        hits += usize::from(argmax(&g.value(l).to_f64_vec()) == it.action);
    }
    Ok(hits as f64 / items.len() as f64)
}

/// Builds the stage-1 model for `kind` at its seeded initialisation.
pub fn init_stage1(corpus: &Corpus, kind: ModalityKind, cfg: &ModelConfig) -> Result<(Stage1Model, ParamStore<f32>)> {
    let mut store = ParamStore::new();
    let model = Stage1Model::new(
        &mut store,
        cfg,
        kind,
        &corpus.payload_shape(kind),
        corpus.classes(),
        corpus.seeds.model,
    )?;
    Ok((model, store))
}

pub fn pretrain_tailored(corpus: &Corpus, kind: ModalityKind, run: &RunConfig) -> Result<Stage1Output> {
    let cfg = run.model.resolve()?;
    let (model, mut store) = init_stage1(corpus, kind, &cfg)?;
    let (train_ids, val_ids) = corpus.stage1_ids(run.train.val_fraction);
    let load = |ids: &[u64]| -> Result<Vec<Item>> {
        ids.iter()
            .map(|&id| {
                Ok(Item {
                    payload: corpus.payload(id, kind)?,
                    action: corpus.action(id)?,
                })
            })
            .collect()
    };
    let train = load(&train_ids)?;
    let val = load(&val_ids)?;
    let sched = &run.schedule.stage1;
    let (micro, acc) = (run.optimizer.micro_batch, run.optimizer.accumulation);
    let batch = micro * acc;
    let steps_per_epoch = train.len().div_ceil(batch) as u64;
    let mut opt = AdamW::new(run.optimizer.adamw)?;
    let mut history = Vec::new();
    let mut step = 0u64;
    let order: Vec<usize> = (0..train.len()).collect();
    for epoch in 0..sched.epochs {
        let order = shuffled(&order, corpus.seeds.root, &format!("stage1/{kind}/epoch{epoch}"));
        let (mut loss_sum, mut seen, mut lr) = (0.0, 0, 0.0);
        for idx in order.chunks(batch) {
            let items: Vec<&Item> = idx.iter().map(|&i| &train[i]).collect();
            let (grads, stats) = batch_gradients(&store, &items, micro, |g, it| {
                let logits = model.logits(g, &it.payload)?;
                let correct = argmax(&g.value(logits).to_f64_vec()) == it.action;
                Ok(SampleLoss {
                    loss: g.cross_entropy(logits, &[Some(it.action)])?,
                    correct,
                })
            })?;
            lr = sched.lr_at(step, steps_per_epoch);
            if !stats.loss_sum.is_finite() {
                return Err(TrainError::Diverged {
                    stage: "stage 1",
                    step,
                    loss: stats.loss_sum,
                    last_good: Box::new(store),
                });
            }
            opt.step(&mut store, &grads, lr)?;
            step += 1;
            loss_sum += stats.loss_sum;
            seen += stats.count;
        }
        let metric = if val.is_empty() {
            accuracy(&model, &store, &train)?
        } else {
            accuracy(&model, &store, &val)?
        };
        log::info!(
            "stage 1 {kind} epoch {epoch}: loss {:.4} val acc {metric:.3}",
            loss_sum / seen.max(1) as f64
        );
        history.push(HistoryRow {
            step,
            epoch,
            lr,
            loss: loss_sum / seen.max(1) as f64,
            metric,
        });
    }
    let val_accuracy = match history.last() {
        Some(r) => r.metric,
        None if val.is_empty() => accuracy(&model, &store, &train)?,
        None => accuracy(&model, &store, &val)?,
    };
    Ok(Stage1Output {
        kind,
        model,
        store,
        history,
        val_accuracy,
    })
}
