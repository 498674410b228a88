//! Small autoregressive decoder over `[Z ; text]`.
//!
//! Projected modality tokens form a prefix that is mutually visible; text
//! positions attend causally to everything before them, prefix included.
//! Sequences are laid out as `<bos> prompt <sep> answer <eos> <pad>*`. The
//! action classifier reads the hidden state at `<sep>`, the last position
//! before the answer.

use mmsense_data::vocab::{BOS, EOS, PAD, SEP};
use mmsense_tensor::nn::{sinusoidal_positions, LayerNorm, Linear};
use mmsense_tensor::{Float, Graph, ParamId, ParamStore, Tensor, TensorError, Var};
use rand::Rng;

use crate::blocks::SelfBlock;
use crate::error::{ModelError, Result};

pub const PREFIX: &str = "decoder.";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecoderConfig {
    pub layers: usize,
    pub width: usize,
    pub heads: usize,
    pub max_len: usize,
    pub vocab: usize,
    pub classes: usize,
    /// Word embeddings are supplied by the caller and `embed` is an offset.
    pub tied: bool,
}

#[derive(Debug, Clone)]
pub struct Decoder {
    pub cfg: DecoderConfig,
    pub embed: ParamId,
    pub layers: Vec<SelfBlock>,
    pub ln_out: LayerNorm,
    pub lm_head: Linear,
    pub classifier: Linear,
}

/// One training or prompting sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Example {
    pub ids: Vec<u32>,
    /// Position of `<sep>` among the text tokens.
    pub sep: usize,
    /// Next-token target per text position; `None` outside the answer.
    pub targets: Vec<Option<usize>>,
}

impl Example {
    /// Prompt-only sequence ending at `<sep>`.
    pub fn prompt(prompt: &[u32]) -> Self {
        let mut ids = Vec::with_capacity(prompt.len() + 2);
        ids.push(BOS);
        ids.extend_from_slice(prompt);
        ids.push(SEP);
        let sep = ids.len() - 1;
        Self {
            targets: vec![None; ids.len()],
            ids,
            sep,
        }
    }

    /// Trailing `<pad>` in `answer` stays after `<eos>` and is never a target.
    pub fn with_answer(prompt: &[u32], answer: &[u32]) -> Self {
        let content = answer.iter().rposition(|&t| t != PAD).map_or(0, |i| i + 1);
        let mut ex = Self::prompt(prompt);
        ex.ids.extend_from_slice(&answer[..content]);
        ex.ids.push(EOS);
        ex.ids.extend_from_slice(&answer[content..]);
        ex.targets = (0..ex.ids.len())
            .map(|i| match ex.ids.get(i + 1) {
                Some(&next) if i >= ex.sep && next != PAD => Some(next as usize),
                _ => None,
            })
            .collect();
        ex
    }

    pub fn answer_positions(&self) -> usize {
        self.targets.iter().flatten().count()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct DecodeOut {
    /// `[text_len, vocab]`.
    pub logits: Var,
    /// `[1, width]` hidden state at the pooling position.
    pub pooled: Var,
}

#[derive(Debug, Clone, Copy)]
pub struct Stage2Loss {
    pub total: Var,
    pub classification: Var,
    pub next_token: Var,
    /// No answer position carried a target.
    pub all_masked: bool,
}

impl Decoder {
    pub fn new<T: Float, R: Rng + ?Sized>(store: &mut ParamStore<T>, cfg: DecoderConfig, rng: &mut R) -> Result<Self> {
        if cfg.classes < 2 || cfg.vocab < 5 || cfg.layers == 0 {
            return Err(ModelError::Config(format!(
                "decoder needs >= 2 classes, a vocabulary beyond the reserved tokens and >= 1 layer: {cfg:?}"
            )));
        }
        let d = cfg.width;
        let embed = if cfg.tied {
            Tensor::zeros([cfg.vocab, d])?
        } else {
            Tensor::randn([cfg.vocab, d], 1.0, rng)?
        };
        let embed = store.add("decoder.embed", embed);
        let layers = (0..cfg.layers)
            .map(|i| SelfBlock::new(store, &format!("decoder.layer{i}"), d, cfg.heads, rng))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            embed,
            layers,
            ln_out: LayerNorm::new(store, "decoder.ln_out", d)?,
            lm_head: Linear::new(store, "decoder.lm_head", d, cfg.vocab, true, rng)?,
            classifier: Linear::new(store, "decoder.classifier", d, cfg.classes, true, rng)?,
            cfg,
        })
    }

    /// Full `[vocab, width]` embedding table. `tied` is required exactly when
    /// the decoder was built tied.
    pub fn table<T: Float>(&self, g: &mut Graph<'_, T>, tied: Option<Var>) -> Result<Var> {
        let e = g.param(self.embed);
        match (self.cfg.tied, tied) {
            (true, Some(t)) => Ok(g.add(t, e)?),
            (false, None) => Ok(e),
            _ => Err(ModelError::Config("tied embedding table mismatch".into())),
        }
    }

    /// `[S, width]` rows of `table` (positions are added in [`Self::decode`]).
    pub fn embed_text<T: Float>(&self, g: &mut Graph<'_, T>, table: Var, ids: &[u32]) -> Result<Var> {
        if let Some(&bad) = ids.iter().find(|&&t| t as usize >= self.cfg.vocab) {
            return Err(ModelError::Data(mmsense_data::DataError::Vocab(format!(
                "token id {bad} outside a vocabulary of {}",
                self.cfg.vocab
            ))));
        }
        let ids: Vec<usize> = ids.iter().map(|&t| t as usize).collect();
        Ok(g.index_rows(table, &ids)?)
    }

    fn mask<T: Float>(n_z: usize, s: usize) -> Result<Tensor<T>> {
        let mut m = vec![T::zero(); s * s];
        for i in 0..s {
            for j in 0..s {
                if j >= n_z && j > i {
                    m[i * s + j] = T::neg_infinity();
                }
            }
        }
        Ok(Tensor::new([s, s], m)?)
    }

    /// Runs the stack over `[z ; text(ids)]`; `pool_at` indexes text positions.
    pub fn decode<T: Float>(
        &self,
        g: &mut Graph<'_, T>,
        z: Option<Var>,
        table: Var,
        ids: &[u32],
        pool_at: usize,
    ) -> Result<DecodeOut> {
        if ids.is_empty() || pool_at >= ids.len() {
            return Err(ModelError::Config(format!(
                "cannot pool at {pool_at} of {} text tokens",
                ids.len()
            )));
        }
        let n_z = z.map_or(0, |z| g.value(z).rows());
        let s = n_z + ids.len();
        if s > self.cfg.max_len {
            return Err(ModelError::TooLong {
                len: s,
                max: self.cfg.max_len,
            });
        }
        if let Some(z) = z {
            if g.value(z).cols() != self.cfg.width {
                return Err(TensorError::Shape {
                    op: "decode",
                    lhs: vec![self.cfg.width],
                    rhs: g.shape(z).to_vec(),
                }
                .into());
            }
        }
        let text = self.embed_text(g, table, ids)?;
        let x = match z {
            Some(z) => g.concat_rows(&[z, text])?,
            None => text,
        };
        let pos = g.constant(sinusoidal_positions(s, self.cfg.width)?);
        let mut x = g.add(x, pos)?;
        let mask = g.constant(Self::mask(n_z, s)?);
        for l in &self.layers {
            x = l.forward(g, x, Some(mask))?;
        }
        let h = self.ln_out.forward(g, x)?;
        let h_text = if n_z > 0 { g.slice_rows(h, n_z, ids.len())? } else { h };
        let logits = self.lm_head.forward(g, h_text)?;
        let pooled = g.slice_rows(h_text, pool_at, 1)?;
        Ok(DecodeOut { logits, pooled })
    }

    pub fn classify<T: Float>(&self, g: &mut Graph<'_, T>, pooled: Var) -> Result<Var> {
        Ok(self.classifier.forward(g, pooled)?)
    }

    /// Classification cross-entropy plus mean next-token cross-entropy over
    /// answer positions.
    pub fn stage2_loss<T: Float>(
        &self,
        g: &mut Graph<'_, T>,
        out: &DecodeOut,
        ex: &Example,
        action: usize,
    ) -> Result<Stage2Loss> {
        let class_logits = self.classify(g, out.pooled)?;
        let classification = g.cross_entropy(class_logits, &[Some(action)])?;
        let all_masked = ex.answer_positions() == 0;
        if all_masked {
            log::warn!("stage-2 example without answer targets; classification term only");
        }
        let next_token = g.cross_entropy(out.logits, &ex.targets)?;
        let total = g.add(classification, next_token)?;
        Ok(Stage2Loss {
            total,
            classification,
            next_token,
            all_masked,
        })
    }

    /// Greedy decoding: argmax with lowest-index tie-break, stopping at
    /// `<eos>` or after `max_new` tokens. `z` must live on `g`.
    pub fn generate<T: Float>(
        &self,
        g: &mut Graph<'_, T>,
        z: Option<Var>,
        table: Var,
        prompt: &[u32],
        max_new: usize,
    ) -> Result<Vec<u32>> {
        let base = Example::prompt(prompt);
        let mut ids = base.ids.clone();
        let mut out = Vec::new();
        while out.len() < max_new {
            let d = self.decode(g, z, table, &ids, base.sep)?;
            let logits = g.value(d.logits);
            let last = logits.row(logits.rows() - 1);
            let mut best = 0;
            for (i, &v) in last.iter().enumerate() {
                if v > last[best] {
                    best = i;
                }
            }
            let tok = best as u32;
            if tok == EOS {
                break;
            }
            out.push(tok);
            ids.push(tok);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn example_layout() {
        let ex = Example::with_answer(&[10, 11], &[20, 21]);
        assert_eq!(ex.ids, vec![BOS, 10, 11, SEP, 20, 21, EOS]);
        assert_eq!(ex.sep, 3);
        assert_eq!(
            ex.targets,
            vec![None, None, None, Some(20), Some(21), Some(EOS as usize), None]
        );
        let padded = Example::with_answer(&[10, 11], &[20, 21, PAD, PAD]);
        assert_eq!(padded.ids, vec![BOS, 10, 11, SEP, 20, 21, EOS, PAD, PAD]);
        assert_eq!(padded.answer_positions(), 3);
        assert_eq!(&padded.targets[..7], &ex.targets[..]);
        let empty = Example::with_answer(&[10], &[]);
        assert_eq!(empty.targets.iter().flatten().count(), 1);
    }

    #[test]
    fn mask_keeps_prefix_visible() {
        let m = Decoder::mask::<f64>(2, 4).unwrap();
        assert_eq!(m.row(0), &[0.0, 0.0, f64::NEG_INFINITY, f64::NEG_INFINITY]);
        assert_eq!(m.row(2), &[0.0, 0.0, 0.0, f64::NEG_INFINITY]);
        assert_eq!(m.row(3), &[0.0; 4]);
    }
}
