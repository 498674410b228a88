//! Frozen universal encoder stub and its text space.
//!
//! A randomly initialised transformer shared by every modality stands in for
//! a pretrained vision-language encoder. Its text side is a hashed word-vector
//! table in the same width: each word owns a fixed Gaussian vector drawn from
//! a seed derived from the word itself, so no vocabulary is needed.

use mmsense_data::text::tokenize;
use mmsense_tensor::nn::{sinusoidal_positions, LayerNorm};
use mmsense_tensor::rng::rng_for;
use mmsense_tensor::{Float, Graph, ParamStore, Tensor, Var};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::blocks::SelfBlock;
use crate::error::Result;

pub const PREFIX: &str = "universal.";

#[derive(Debug, Clone)]
pub struct UniversalEncoder {
    pub blocks: Vec<SelfBlock>,
    pub ln_out: LayerNorm,
    pub dim: usize,
    pub seed: u64,
}

impl UniversalEncoder {
    /// Builds and freezes the stub. Weights depend only on `seed`.
    pub fn new<T: Float>(
        store: &mut ParamStore<T>,
        dim: usize,
        heads: usize,
        blocks: usize,
        seed: u64,
    ) -> Result<Self> {
        let mut rng = rng_for(seed, "init/universal");
        let blocks = (0..blocks)
            .map(|i| SelfBlock::new(store, &format!("universal.block{i}"), dim, heads, &mut rng))
            .collect::<Result<Vec<_>>>()?;
        let ln_out = LayerNorm::new(store, "universal.ln_out", dim)?;
        store.freeze_prefix(PREFIX, true);
        Ok(Self {
            blocks,
            ln_out,
            dim,
            seed,
        })
    }

    /// `[n, d_m]` tokens to `[n, d_m]` embeddings.
    pub fn forward<T: Float>(&self, g: &mut Graph<'_, T>, tokens: Var) -> Result<Var> {
        let n = g.value(tokens).rows();
        let pos = g.constant(sinusoidal_positions(n, self.dim)?);
        let mut x = g.add(tokens, pos)?;
        for b in &self.blocks {
            x = b.forward(g, x, None)?;
        }
        self.ln_out.forward(g, x).map_err(Into::into)
    }

    pub fn word_vector(&self, word: &str) -> Vec<f64> {
        word_vector(self.seed, self.dim, word)
    }

    /// `[words, d_m]` table of word vectors.
    pub fn word_table<T: Float>(&self, words: &[String]) -> Result<Tensor<T>> {
        let data: Vec<T> = words.iter().flat_map(|w| self.word_vector(w)).map(T::lit).collect();
        Ok(Tensor::new([words.len(), self.dim], data)?)
    }

    pub fn text_anchor(&self, caption: &str) -> Anchor {
        text_anchor_embed(self.seed, self.dim, caption)
    }
}

/// Fixed unit-variance vector for `word`.
pub fn word_vector(seed: u64, dim: usize, word: &str) -> Vec<f64> {
    let mut rng = rng_for(seed, &format!("universal/word/{word}"));
    (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Anchor {
    pub vector: Vec<f64>,
    /// The caption had no tokens; `vector` is zero.
    pub empty: bool,
}

/// Mean word vector of the caption's tokens.
pub fn text_anchor_embed(seed: u64, dim: usize, caption: &str) -> Anchor {
    let words = tokenize(caption);
    let mut vector = vec![0.0; dim];
    if words.is_empty() {
        return Anchor { vector, empty: true };
    }
    for w in &words {
        for (a, v) in vector.iter_mut().zip(word_vector(seed, dim, w)) {
            *a += v;
        }
    }
    vector.iter_mut().for_each(|a| *a /= words.len() as f64);
    Anchor { vector, empty: false }
}
