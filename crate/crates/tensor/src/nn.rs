//! Parameterised layers built on [`Graph`] ops.
//!
//! Layers only hold [`ParamId`]s, so the same layer definition serves any
//! precision: construct it against a `ParamStore<f32>` for training or cast the
//! store to `f64` for gradient checks.

use rand::Rng;

use crate::error::{Result, TensorError};
use crate::float::Float;
use crate::graph::{Graph, Var};
use crate::param::{ParamId, ParamStore};
use crate::tensor::Tensor;

/// Affine map `x[n, in] * W[in, out] + b`.
#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn new<T: Float, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        bias: bool,
        rng: &mut R,
    ) -> Result<Self> {
        let std = 1.0 / (in_dim as f64).sqrt();
        let weight = store.add(format!("{name}.weight"), Tensor::randn([in_dim, out_dim], std, rng)?);
        let bias = if bias {
            Some(store.add(format!("{name}.bias"), Tensor::zeros([out_dim])?))
        } else {
            None
        };
        Ok(Self {
            weight,
            bias,
            in_dim,
            out_dim,
        })
    }

    pub fn forward<T: Float>(&self, g: &mut Graph<'_, T>, x: Var) -> Result<Var> {
        let w = g.param(self.weight);
        let y = g.matmul(x, w)?;
        match self.bias {
            Some(b) => {
                let b = g.param(b);
                g.add_row(y, b)
            }
            None => Ok(y),
        }
    }

    /// Overwrites weight (and bias) with zeros.
    pub fn zero<T: Float>(&self, store: &mut ParamStore<T>) -> Result<()> {
        store.set_value(self.weight, Tensor::zeros([self.in_dim, self.out_dim])?)?;
        if let Some(b) = self.bias {
            store.set_value(b, Tensor::zeros([self.out_dim])?)?;
        }
        Ok(())
    }

    /// Overwrites the bias, if any, with zeros.
    pub fn zero_bias<T: Float>(&self, store: &mut ParamStore<T>) {
        if let Some(b) = self.bias {
            store.value_mut(b).data_mut().iter_mut().for_each(|v| *v = T::zero());
        }
    }

    pub fn params(&self) -> Vec<ParamId> {
        let mut v = vec![self.weight];
        v.extend(self.bias);
        v
    }
}

#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
}

impl LayerNorm {
    pub fn new<T: Float>(store: &mut ParamStore<T>, name: &str, dim: usize) -> Result<Self> {
        Ok(Self {
            gamma: store.add(format!("{name}.gamma"), Tensor::ones([dim])?),
            beta: store.add(format!("{name}.beta"), Tensor::zeros([dim])?),
        })
    }

    pub fn forward<T: Float>(&self, g: &mut Graph<'_, T>, x: Var) -> Result<Var> {
        let gamma = g.param(self.gamma);
        let beta = g.param(self.beta);
        g.layer_norm(x, gamma, beta)
    }
}

/// `linear -> GELU -> linear` with hidden width `4 * dim`.
#[derive(Debug, Clone)]
pub struct FeedForward {
    pub up: Linear,
    pub down: Linear,
}

impl FeedForward {
    pub fn new<T: Float, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        name: &str,
        dim: usize,
        rng: &mut R,
    ) -> Result<Self> {
        Self::with_hidden(store, name, dim, 4 * dim, dim, rng)
    }

    pub fn with_hidden<T: Float, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        name: &str,
        in_dim: usize,
        hidden: usize,
        out_dim: usize,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(Self {
            up: Linear::new(store, &format!("{name}.up"), in_dim, hidden, true, rng)?,
            down: Linear::new(store, &format!("{name}.down"), hidden, out_dim, true, rng)?,
        })
    }

    pub fn forward<T: Float>(&self, g: &mut Graph<'_, T>, x: Var) -> Result<Var> {
        let h = self.up.forward(g, x)?;
        let h = g.gelu(h);
        self.down.forward(g, h)
    }
}

/// Multi-head scaled dot-product attention with input and output projections.
#[derive(Debug, Clone)]
pub struct MultiHeadAttention {
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub o: Linear,
    pub heads: usize,
    pub dim: usize,
}

impl MultiHeadAttention {
    pub fn new<T: Float, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        name: &str,
        dim: usize,
        heads: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if heads == 0 || dim % heads != 0 {
            return Err(TensorError::Config(format!(
                "width {dim} not divisible by {heads} heads"
            )));
        }
        Ok(Self {
            q: Linear::new(store, &format!("{name}.q"), dim, dim, true, rng)?,
            k: Linear::new(store, &format!("{name}.k"), dim, dim, true, rng)?,
            v: Linear::new(store, &format!("{name}.v"), dim, dim, true, rng)?,
            o: Linear::new(store, &format!("{name}.o"), dim, dim, true, rng)?,
            heads,
            dim,
        })
    }

    /// Sets all four projections to identity with zero bias.
    pub fn set_identity<T: Float>(&self, store: &mut ParamStore<T>) -> Result<()> {
        for l in [&self.q, &self.k, &self.v, &self.o] {
            store.set_value(l.weight, Tensor::eye(self.dim)?)?;
            if let Some(b) = l.bias {
                store.set_value(b, Tensor::zeros([self.dim])?)?;
            }
        }
        Ok(())
    }

    /// `mask`, when given, is an additive `[q, k]` constant (use `-inf` to
    /// block a position).
    pub fn forward<T: Float>(&self, g: &mut Graph<'_, T>, xq: Var, xkv: Var, mask: Option<Var>) -> Result<Var> {
        let d = g.value(xq).cols();
        if d != self.dim || g.value(xkv).cols() != self.dim {
            return Err(crate::error::shape_err("attention", g.shape(xq), g.shape(xkv)));
        }
        let q = self.q.forward(g, xq)?;
        let k = self.k.forward(g, xkv)?;
        let v = self.v.forward(g, xkv)?;
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
            let mut s = g.scale(s, scale);
            if let Some(m) = mask {
                s = g.add(s, m)?;
            }
            let p = g.softmax(s)?;
            outs.push(g.matmul(p, vh)?);
        }
        let cat = if outs.len() == 1 {
            outs[0]
        } else {
            g.concat_cols(&outs)?
        };
        self.o.forward(g, cat)
    }
}

/// Fixed sinusoidal position table `[n, d]`.
pub fn sinusoidal_positions<T: Float>(n: usize, d: usize) -> Result<Tensor<T>> {
    let mut data = Vec::with_capacity(n * d);
    for pos in 0..n {
        for i in 0..d {
            let rate = 1.0 / 10_000f64.powf((2 * (i / 2)) as f64 / d as f64);
            let a = pos as f64 * rate;
            data.push(T::lit(if i % 2 == 0 { a.sin() } else { a.cos() }));
        }
    }
    Tensor::new([n, d], data)
}
