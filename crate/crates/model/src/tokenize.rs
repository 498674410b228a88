//! Modality-specific tokenizers: a fixed raw-token layout per family followed
//! by a learned linear map to the universal width.
//!
//! * image-like `[T, H, W, C]`: non-overlapping `p x p` patches, `T * (H/p) * (W/p)` tokens
//! * point sets `[T, P, 3]`: `g x g` horizontal voxel cells per frame, `T * g^2` tokens of
//!   (occupancy, mean x, mean y, mean z)
//! * temporal traces `[L, S]`: `ceil(L / w)` windows of `w` rows, the last zero-padded

use mmsense_data::{Family, ModalityKind, Payload};
use mmsense_tensor::nn::Linear;
use mmsense_tensor::{Float, Graph, ParamStore, Tensor, Var};
use rand::Rng;

use crate::config::ModelConfig;
use crate::error::{ModelError, Result};

pub const POINT_FEATURES: usize = 4;

/// Raw tokens before the learned projection.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenGrid<T> {
    pub tokens: Tensor<T>,
    /// Set when the payload had no content and a single zero sentinel token
    /// stands in for it.
    pub empty: bool,
}

/// Static tokenizer geometry for one modality and payload shape.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenLayout {
    pub kind: ModalityKind,
    pub payload_shape: Vec<usize>,
    pub patch: usize,
    pub voxel: usize,
    pub window: usize,
    pub voxel_extent_bits: u64,
}

impl TokenLayout {
    pub fn new(kind: ModalityKind, payload_shape: &[usize], cfg: &ModelConfig) -> Result<Self> {
        let l = Self {
            kind,
            payload_shape: payload_shape.to_vec(),
            patch: cfg.patch,
            voxel: cfg.voxel,
            window: cfg.window,
            voxel_extent_bits: cfg.voxel_extent.to_bits(),
        };
        l.check_shape(payload_shape)?;
        Ok(l)
    }

    fn check_shape(&self, shape: &[usize]) -> Result<()> {
        let bad = |why: &str| Err(ModelError::Payload(format!("{} payload {shape:?}: {why}", self.kind)));
        match self.kind.family() {
            Family::Image => {
                if shape.len() != 4 || shape[3] != self.kind.image_channels() {
                    return bad("expected [T, H, W, C]");
                }
                if shape[1] % self.patch != 0 || shape[2] % self.patch != 0 || shape[0] == 0 {
                    return bad(&format!("frame not divisible into {0}x{0} patches", self.patch));
                }
            }
            Family::PointSet => {
                if shape.len() != 3 || shape[2] != 3 || shape[0] == 0 {
                    return bad("expected [T, P, 3]");
                }
            }
            Family::Temporal => {
                if shape.len() != 2 || shape[0] == 0 || shape[1] == 0 {
                    return bad("expected [L, S]");
                }
            }
        }
        Ok(())
    }

    /// Token count for a non-empty payload of the configured shape.
    pub fn tokens(&self) -> usize {
        let s = &self.payload_shape;
        match self.kind.family() {
            Family::Image => s[0] * (s[1] / self.patch) * (s[2] / self.patch),
            Family::PointSet => {
                if s[1] == 0 {
                    1
                } else {
                    s[0] * self.voxel * self.voxel
                }
            }
            Family::Temporal => s[0].div_ceil(self.window),
        }
    }

    pub fn features(&self) -> usize {
        let s = &self.payload_shape;
        match self.kind.family() {
            Family::Image => self.patch * self.patch * s[3],
            Family::PointSet => POINT_FEATURES,
            Family::Temporal => self.window * s[1],
        }
    }

    pub fn raw<T: Float>(&self, payload: &Payload) -> Result<TokenGrid<T>> {
        let shape = payload.shape();
        self.check_shape(shape)?;
        let d = payload.data();
        match self.kind.family() {
            Family::Image => Ok(TokenGrid {
                tokens: patchify(d, shape, self.patch)?,
                empty: false,
            }),
            Family::PointSet => voxelize(d, shape, self.voxel, f64::from_bits(self.voxel_extent_bits)),
            Family::Temporal => Ok(TokenGrid {
                tokens: windows(d, shape, self.window)?,
                empty: false,
            }),
        }
    }
}

fn patchify<T: Float>(d: &[f32], shape: &[usize], p: usize) -> Result<Tensor<T>> {
    let (t, h, w, c) = (shape[0], shape[1], shape[2], shape[3]);
    let (ny, nx) = (h / p, w / p);
    let mut out = Vec::with_capacity(t * h * w * c);
    for f in 0..t {
        for py in 0..ny {
            for px in 0..nx {
                for dy in 0..p {
                    let row = ((f * h + py * p + dy) * w + px * p) * c;
                    out.extend(d[row..row + p * c].iter().map(|&v| T::lit(v as f64)));
                }
            }
        }
    }
    Ok(Tensor::new([t * ny * nx, p * p * c], out)?)
}

fn voxelize<T: Float>(d: &[f32], shape: &[usize], g: usize, extent: f64) -> Result<TokenGrid<T>> {
    let (t, p) = (shape[0], shape[1]);
    if p == 0 {
        return Ok(TokenGrid {
            tokens: Tensor::zeros([1, POINT_FEATURES])?,
            empty: true,
        });
    }
    let cell = |v: f32| -> usize {
        let u = ((v as f64 + extent) / (2.0 * extent) * g as f64).floor();
        u.clamp(0.0, (g - 1) as f64) as usize
    };
    let mut acc = vec![[0.0f64; POINT_FEATURES]; t * g * g];
    for f in 0..t {
        for i in 0..p {
            let q = &d[(f * p + i) * 3..(f * p + i) * 3 + 3];
            let a = &mut acc[(f * g + cell(q[1])) * g + cell(q[0])];
            a[0] += 1.0;
            for k in 0..3 {
                a[k + 1] += q[k] as f64;
            }
        }
    }
    let mut out = Vec::with_capacity(acc.len() * POINT_FEATURES);
    for a in &acc {
        let n = a[0];
        out.push(T::lit(n / p as f64));
        for k in 1..POINT_FEATURES {
            out.push(T::lit(if n > 0.0 { a[k] / n } else { 0.0 }));
        }
    }
    Ok(TokenGrid {
        tokens: Tensor::new([t * g * g, POINT_FEATURES], out)?,
        empty: false,
    })
}

fn windows<T: Float>(d: &[f32], shape: &[usize], w: usize) -> Result<Tensor<T>> {
    let (l, s) = (shape[0], shape[1]);
    let n = l.div_ceil(w);
    let mut out = vec![T::zero(); n * w * s];
    for (o, &v) in out.iter_mut().zip(d) {
        *o = T::lit(v as f64);
    }
    Ok(Tensor::new([n, w * s], out)?)
}

/// Raw layout plus the learned projection to `d_m`.
#[derive(Debug, Clone)]
pub struct Tokenizer {
    pub layout: TokenLayout,
    pub proj: Linear,
}

impl Tokenizer {
    pub fn new<T: Float, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        layout: TokenLayout,
        d_m: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let name = format!("tokenizer.{}", layout.kind.name());
        let proj = Linear::new(store, &format!("{name}.proj"), layout.features(), d_m, true, rng)?;
        Ok(Self { layout, proj })
    }

    pub fn forward<T: Float>(&self, g: &mut Graph<'_, T>, raw: &TokenGrid<T>) -> Result<Var> {
        let x = g.constant(raw.tokens.clone());
        Ok(self.proj.forward(g, x)?)
    }
}
