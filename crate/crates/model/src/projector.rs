//! Projectors from encoder space (`d_m`) into decoder space (`d_llm`).
//!
//! [`Umip`] pools the universal embeddings into coarse queries and refines
//! them over `L` blocks of self-attention, cross-attention against keys and
//! values taken from the tailored feature map, and a feed-forward layer. Keys
//! and values are computed once per sample and shared by every block.
//!
//! [`QFormer`] is the query-bank baseline: learnable per-modality queries
//! attend to an input sequence through `L` blocks with per-block key/value
//! maps.

use std::sync::atomic::{AtomicUsize, Ordering};

use mmsense_data::ModalityKind;
use mmsense_tensor::nn::Linear;
use mmsense_tensor::{Float, Graph, ParamId, ParamStore, Tensor, Var};
use rand::Rng;

use crate::blocks::{Mlp, QueryBlock};
use crate::config::ModelConfig;
use crate::error::{ModelError, Result};

pub const PREFIX: &str = "projector.";

fn final_name(cfg: &ModelConfig, kind: ModalityKind) -> String {
    if cfg.shared_final_mlp {
        "projector.final".into()
    } else {
        format!("projector.final.{}", kind.name())
    }
}

#[derive(Debug)]
pub struct Umip {
    pub kind: ModalityKind,
    pub queries: usize,
    pub k: Linear,
    pub v: Linear,
    pub blocks: Vec<QueryBlock>,
    pub final_mlp: Mlp,
    kv_calls: AtomicUsize,
}

impl Clone for Umip {
    fn clone(&self) -> Self {
        Self {
            kind: self.kind,
            queries: self.queries,
            k: self.k.clone(),
            v: self.v.clone(),
            blocks: self.blocks.clone(),
            final_mlp: self.final_mlp.clone(),
            kv_calls: AtomicUsize::new(self.kv_calls()),
        }
    }
}

impl Umip {
    pub fn new<T: Float, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        cfg: &ModelConfig,
        kind: ModalityKind,
        rng: &mut R,
    ) -> Result<Self> {
        cfg.validate()?;
        let d = cfg.d_m;
        let blocks = (0..cfg.projector_blocks)
            .map(|l| QueryBlock::new(store, &format!("projector.block{l}"), d, cfg.heads, rng))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            kind,
            queries: cfg.queries_for(kind)?,
            k: Linear::new(store, "projector.kv.k", d, d, true, rng)?,
            v: Linear::new(store, "projector.kv.v", d, d, true, rng)?,
            blocks,
            final_mlp: Mlp::new(store, &final_name(cfg, kind), (d, cfg.d_llm, cfg.d_llm), rng)?,
            kv_calls: AtomicUsize::new(0),
        })
    }

    /// Adaptive average pooling along the token axis.
    pub fn form_queries<T: Float>(&self, g: &mut Graph<'_, T>, y_clip: Var, n_out: usize) -> Result<Var> {
        Ok(g.adaptive_avg_pool(y_clip, n_out)?)
    }

    /// Separate linear maps of the row-major flattened grid.
    pub fn kv_from_features<T: Float>(&self, g: &mut Graph<'_, T>, y_t: Var) -> Result<(Var, Var)> {
        self.kv_calls.fetch_add(1, Ordering::Relaxed);
        Ok((self.k.forward(g, y_t)?, self.v.forward(g, y_t)?))
    }

    /// Number of `kv_from_features` calls so far.
    pub fn kv_calls(&self) -> usize {
        self.kv_calls.load(Ordering::Relaxed)
    }

    pub fn reset_kv_calls(&self) {
        self.kv_calls.store(0, Ordering::Relaxed);
    }

    /// `Y_clip [n_m, d_m]`, `Y_t [h*w, d_m]` to `Z [n', d_llm]`.
    pub fn forward<T: Float>(&self, g: &mut Graph<'_, T>, y_clip: Var, y_t: Var) -> Result<Var> {
        let n_m = g.value(y_clip).rows();
        if self.queries > n_m {
            return Err(ModelError::Config(format!(
                "{}: {} queries from only {n_m} embeddings",
                self.kind, self.queries
            )));
        }
        let mut q = self.form_queries(g, y_clip, self.queries)?;
        let (k, v) = self.kv_from_features(g, y_t)?;
        for b in &self.blocks {
            q = b.forward(g, q, k, v)?;
        }
        self.final_mlp.forward(g, q)
    }

    /// Zeroes every block's residual-branch output so the stack is the identity.
    pub fn zero_block_outputs<T: Float>(&self, store: &mut ParamStore<T>) -> Result<()> {
        self.blocks.iter().try_for_each(|b| b.zero_outputs(store))
    }
}

#[derive(Debug, Clone)]
pub struct QFormerLayer {
    pub block: QueryBlock,
    pub k: Linear,
    pub v: Linear,
}

#[derive(Debug, Clone)]
pub struct QFormer {
    pub kind: ModalityKind,
    /// `[n_learnable, d_m]` query bank.
    pub queries: ParamId,
    pub layers: Vec<QFormerLayer>,
    pub final_mlp: Mlp,
}

impl QFormer {
    pub fn new<T: Float, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        cfg: &ModelConfig,
        kind: ModalityKind,
        rng: &mut R,
    ) -> Result<Self> {
        cfg.validate()?;
        let d = cfg.d_m;
        let queries = store.add(
            format!("projector.queries.{}", kind.name()),
            Tensor::randn([cfg.qformer_queries, d], 1.0, rng)?,
        );
        let layers = (0..cfg.projector_blocks)
            .map(|l| {
                let name = format!("projector.block{l}");
                Ok(QFormerLayer {
                    block: QueryBlock::new(store, &name, d, cfg.heads, rng)?,
                    k: Linear::new(store, &format!("{name}.kv.k"), d, d, true, rng)?,
                    v: Linear::new(store, &format!("{name}.kv.v"), d, d, true, rng)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            kind,
            queries,
            layers,
            final_mlp: Mlp::new(store, &final_name(cfg, kind), (d, cfg.d_llm, cfg.d_llm), rng)?,
        })
    }

    /// `input [n, d_m]` to `Z [n_learnable, d_llm]`.
    pub fn forward<T: Float>(&self, g: &mut Graph<'_, T>, input: Var) -> Result<Var> {
        let mut q = g.param(self.queries);
        for l in &self.layers {
            let k = l.k.forward(g, input)?;
            let v = l.v.forward(g, input)?;
            q = l.block.forward(g, q, k, v)?;
        }
        self.final_mlp.forward(g, q)
    }
}

#[derive(Debug, Clone)]
pub enum Projector {
    Umip(Umip),
    QFormer(QFormer),
}

impl Projector {
    pub fn final_mlp(&self) -> &Mlp {
        match self {
            Projector::Umip(u) => &u.final_mlp,
            Projector::QFormer(q) => &q.final_mlp,
        }
    }
}
