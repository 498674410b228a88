//! Pre-norm residual blocks shared by the encoders, projectors and decoder.

use mmsense_tensor::nn::{FeedForward, LayerNorm, Linear, MultiHeadAttention};
use mmsense_tensor::{Float, Graph, ParamStore, TensorError, Var};
use rand::Rng;

use crate::error::Result;

/// `x + Attn(LN x)` then `x + FFN(LN x)`; the attention mask is additive.
#[derive(Debug, Clone)]
pub struct SelfBlock {
    pub ln_attn: LayerNorm,
    pub attn: MultiHeadAttention,
    pub ln_ffn: LayerNorm,
    pub ffn: FeedForward,
}

impl SelfBlock {
    pub fn new<T: Float, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        name: &str,
        dim: usize,
        heads: usize,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(Self {
            ln_attn: LayerNorm::new(store, &format!("{name}.ln_attn"), dim)?,
            attn: MultiHeadAttention::new(store, &format!("{name}.attn"), dim, heads, rng)?,
            ln_ffn: LayerNorm::new(store, &format!("{name}.ln_ffn"), dim)?,
            ffn: FeedForward::new(store, &format!("{name}.ffn"), dim, rng)?,
        })
    }

    pub fn forward<T: Float>(&self, g: &mut Graph<'_, T>, x: Var, mask: Option<Var>) -> Result<Var> {
        let h = self.ln_attn.forward(g, x)?;
        let a = self.attn.forward(g, h, h, mask)?;
        let x = g.add(x, a)?;
        let h = self.ln_ffn.forward(g, x)?;
        let f = self.ffn.forward(g, h)?;
        Ok(g.add(x, f)?)
    }
}

/// Multi-head attention of queries over precomputed keys and values. Only
/// the query and output projections belong to this layer.
#[derive(Debug, Clone)]
pub struct CrossAttention {
    pub q: Linear,
    pub o: Linear,
    pub heads: usize,
    pub dim: usize,
}

impl CrossAttention {
    pub fn new<T: Float, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        name: &str,
        dim: usize,
        heads: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if heads == 0 || dim % heads != 0 {
            return Err(TensorError::Config(format!("width {dim} not divisible by {heads} heads")).into());
        }
        Ok(Self {
            q: Linear::new(store, &format!("{name}.q"), dim, dim, true, rng)?,
            o: Linear::new(store, &format!("{name}.o"), dim, dim, true, rng)?,
            heads,
            dim,
        })
    }

    pub fn forward<T: Float>(&self, g: &mut Graph<'_, T>, x: Var, k: Var, v: Var) -> Result<Var> {
        for t in [x, k, v] {
            if g.value(t).cols() != self.dim {
                return Err(TensorError::Shape {
                    op: "cross_attention",
                    lhs: vec![self.dim],
                    rhs: g.shape(t).to_vec(),
                }
                .into());
            }
        }
        if g.value(k).rows() != g.value(v).rows() {
            return Err(TensorError::Shape {
                op: "cross_attention",
                lhs: g.shape(k).to_vec(),
                rhs: g.shape(v).to_vec(),
            }
            .into());
        }
        let q = self.q.forward(g, x)?;
        let dh = self.dim / self.heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut outs = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let (qh, kh, vh) = if self.heads == 1 {
                (q, k, v)
            } else {
                (
                    g.slice_cols(q, h * dh, dh)?,
                    g.slice_cols(k, h * dh, dh)?,
                    g.slice_cols(v, h * dh, dh)?,
                )
            };
            let s = g.matmul_bt(qh, kh)?;
            let s = g.scale(s, scale);
            let p = g.softmax(s)?;
            outs.push(g.matmul(p, vh)?);
        }
        let cat = if outs.len() == 1 {
            outs[0]
        } else {
            g.concat_cols(&outs)?
        };
        Ok(self.o.forward(g, cat)?)
    }
}

/// Query-refinement block: self-attention, cross-attention against given
/// keys/values, feed-forward; each pre-normalised with a residual path.
#[derive(Debug, Clone)]
pub struct QueryBlock {
    pub ln_self: LayerNorm,
    pub self_attn: MultiHeadAttention,
    pub ln_cross: LayerNorm,
    pub cross: CrossAttention,
    pub ln_ffn: LayerNorm,
    pub ffn: FeedForward,
}

impl QueryBlock {
    pub fn new<T: Float, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        name: &str,
        dim: usize,
        heads: usize,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(Self {
            ln_self: LayerNorm::new(store, &format!("{name}.ln_self"), dim)?,
            self_attn: MultiHeadAttention::new(store, &format!("{name}.self"), dim, heads, rng)?,
            ln_cross: LayerNorm::new(store, &format!("{name}.ln_cross"), dim)?,
            cross: CrossAttention::new(store, &format!("{name}.cross"), dim, heads, rng)?,
            ln_ffn: LayerNorm::new(store, &format!("{name}.ln_ffn"), dim)?,
            ffn: FeedForward::new(store, &format!("{name}.ffn"), dim, rng)?,
        })
    }

    pub fn forward<T: Float>(&self, g: &mut Graph<'_, T>, q: Var, k: Var, v: Var) -> Result<Var> {
        let h = self.ln_self.forward(g, q)?;
        let a = self.self_attn.forward(g, h, h, None)?;
        let q = g.add(q, a)?;
        let h = self.ln_cross.forward(g, q)?;
        let c = self.cross.forward(g, h, k, v)?;
        let q = g.add(q, c)?;
        let h = self.ln_ffn.forward(g, q)?;
        let f = self.ffn.forward(g, h)?;
        Ok(g.add(q, f)?)
    }

    /// Zeroes the three residual-branch output projections.
    pub fn zero_outputs<T: Float>(&self, store: &mut ParamStore<T>) -> Result<()> {
        self.self_attn.o.zero(store)?;
        self.cross.o.zero(store)?;
        self.ffn.down.zero(store)?;
        Ok(())
    }
}

/// `linear -> GELU -> linear`.
#[derive(Debug, Clone)]
pub struct Mlp {
    pub fc1: Linear,
    pub fc2: Linear,
}

impl Mlp {
    pub fn new<T: Float, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        name: &str,
        dims: (usize, usize, usize),
        rng: &mut R,
    ) -> Result<Self> {
        Ok(Self {
            fc1: Linear::new(store, &format!("{name}.fc1"), dims.0, dims.1, true, rng)?,
            fc2: Linear::new(store, &format!("{name}.fc2"), dims.1, dims.2, true, rng)?,
        })
    }

    pub fn forward<T: Float>(&self, g: &mut Graph<'_, T>, x: Var) -> Result<Var> {
        let h = self.fc1.forward(g, x)?;
        let h = g.gelu(h);
        Ok(self.fc2.forward(g, h)?)
    }
}
