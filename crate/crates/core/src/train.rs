//! Shared training-loop pieces: batching with gradient accumulation,
//! history rows and parameter-group hashes.

use std::io::Write;
use std::path::Path;

use mmsense_tensor::{Float, Gradients, Graph, ParamStore, Var};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Result, TrainError};

/// One line of a training history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub step: u64,
    pub epoch: usize,
    pub lr: f64,
    pub loss: f64,
    /// Stage 1: validation accuracy. Stage 2: training classification accuracy.
    pub metric: f64,
}

pub fn write_history(path: impl AsRef<Path>, rows: &[HistoryRow]) -> Result<()> {
    write_file(path, &history_csv(rows)?)
}

pub fn history_csv(rows: &[HistoryRow]) -> Result<String> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(["step", "epoch", "lr", "loss", "metric"])?;
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| TrainError::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv is utf-8"))
}

/// Per-sample outcome of a loss closure.
pub struct SampleLoss {
    pub loss: Var,
    pub correct: bool,
}

/// Summed over a batch.
#[derive(Debug, Clone)]
pub struct BatchStats {
    pub loss_sum: f64,
    pub correct: usize,
    pub count: usize,
}

/// Mean gradient over `batch`, computed as `micro`-sized chunks whose mean
/// gradients are combined with weights `len(chunk) / len(batch)`.
pub fn batch_gradients<T: Float, S>(
    store: &ParamStore<T>,
    batch: &[S],
    micro: usize,
    mut loss: impl FnMut(&mut Graph<'_, T>, &S) -> Result<SampleLoss>,
) -> Result<(Gradients<T>, BatchStats)> {
    let mut total = Gradients::empty(store.len());
    let mut stats = BatchStats {
        loss_sum: 0.0,
        correct: 0,
        count: 0,
    };
    for chunk in batch.chunks(micro.max(1)) {
        let mut part = Gradients::empty(store.len());
        for s in chunk {
            let mut g = Graph::with_params(store);
            let out = loss(&mut g, s)?;
            let value = g.scalar_value(out.loss).as_f64();
            stats.loss_sum += value;
            stats.correct += usize::from(out.correct);
            stats.count += 1;
            if !value.is_finite() {
                continue;
            }
            let grads = g.backward(out.loss)?;
            part.accumulate(&grads, T::lit(1.0 / chunk.len() as f64))?;
        }
        total.accumulate(&part, T::lit(chunk.len() as f64 / batch.len() as f64))?;
    }
    Ok((total, stats))
}

/// Deterministic epoch order.
pub fn shuffled<T: Clone>(items: &[T], seed: u64, label: &str) -> Vec<T> {
    let mut v = items.to_vec();
    v.shuffle(&mut mmsense_tensor::rng::rng_for(seed, label));
    v
}

/// SHA-256 over name, shape and little-endian bytes of every parameter
/// whose name starts with `prefix`, in store order.
pub fn group_hash<T: Float>(store: &ParamStore<T>, prefix: &str) -> String {
    let mut h = Sha256::new();
    let mut buf = Vec::new();
    for (_, p) in store.iter().filter(|(_, p)| p.name.starts_with(prefix)) {
        h.update(p.name.as_bytes());
        h.update([0]);
        for d in p.value.shape() {
            h.update((*d as u64).to_le_bytes());
        }
        buf.clear();
        for &v in p.value.data() {
            v.write_le(&mut buf);
        }
        h.update(&buf);
    }
    hex::encode(h.finalize())
}

/// Writes `text` to `path`, creating parent directories.
pub fn write_file(path: impl AsRef<Path>, text: &str) -> Result<()> {
    let path = path.as_ref();
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(text.as_bytes())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use mmsense_tensor::Tensor;

    #[test]
    fn hash_tracks_values_under_prefix_only() {
        let mut s = ParamStore::<f32>::new();
        let a = s.add("tailored.x", Tensor::from_f64([2], &[1.0, 2.0]).unwrap());
        let b = s.add("decoder.y", Tensor::from_f64([1], &[3.0]).unwrap());
        let h = group_hash(&s, "tailored.");
        s.value_mut(b).data_mut()[0] = 4.0;
        assert_eq!(group_hash(&s, "tailored."), h);
        s.value_mut(a).data_mut()[1] = 2.5;
        assert_ne!(group_hash(&s, "tailored."), h);
    }
}
