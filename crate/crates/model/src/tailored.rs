//! Pre-trainable tailored encoders, one per modality family, each followed
//! by a one-hidden-layer MLP to a `grid_h x grid_w x d_m` feature map.
//!
//! * image-like: stem conv, residual blocks and stride-2 convs until the map
//!   fits the grid; pooled over frames and windows
//! * point sets: shared per-point MLP, max over each frame's points
//! * temporal traces: 1D conv blocks over time, pooled to four steps

use std::rc::Rc;

use mmsense_data::{Family, ModalityKind, Payload};
use mmsense_tensor::nn::Linear;
use mmsense_tensor::ops::pool_window;
use mmsense_tensor::{Float, Graph, ParamStore, Tensor, Var, GATHER_PAD};
use rand::Rng;

use crate::blocks::Mlp;
use crate::config::ModelConfig;
use crate::error::{ModelError, Result};

pub const PREFIX: &str = "tailored.";
pub const HEAD_PREFIX: &str = "stage1_head.";
/// Time steps kept by the temporal encoder before flattening.
pub const TEMPORAL_STEPS: usize = 4;

/// im2col index for a `k x k` convolution over `frames` maps of `h x w x c`
/// stored row-major as `[frames * h * w, c]`. Returns the index and the
/// output height and width.
pub fn conv2d_index(
    frames: usize,
    h: usize,
    w: usize,
    c: usize,
    k: usize,
    stride: usize,
    pad: usize,
) -> (Rc<Vec<u32>>, usize, usize) {
    let oh = (h + 2 * pad - k) / stride + 1;
    let ow = (w + 2 * pad - k) / stride + 1;
    let mut idx = Vec::with_capacity(frames * oh * ow * k * k * c);
    for f in 0..frames {
        for oy in 0..oh {
            for ox in 0..ow {
                for ky in 0..k {
                    for kx in 0..k {
                        let iy = (oy * stride + ky) as isize - pad as isize;
                        let ix = (ox * stride + kx) as isize - pad as isize;
                        for ch in 0..c {
                            idx.push(if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                GATHER_PAD
                            } else {
                                (((f * h + iy as usize) * w + ix as usize) * c + ch) as u32
                            });
                        }
                    }
                }
            }
        }
    }
    (Rc::new(idx), oh, ow)
}

/// im2col index for a length-`k` temporal convolution over `[len, c]`.
pub fn conv1d_index(len: usize, c: usize, k: usize, stride: usize, pad: usize) -> (Rc<Vec<u32>>, usize) {
    let out = (len + 2 * pad - k) / stride + 1;
    let mut idx = Vec::with_capacity(out * k * c);
    for o in 0..out {
        for kk in 0..k {
            let i = (o * stride + kk) as isize - pad as isize;
            for ch in 0..c {
                idx.push(if i < 0 || i >= len as isize {
                    GATHER_PAD
                } else {
                    (i as usize * c + ch) as u32
                });
            }
        }
    }
    (Rc::new(idx), out)
}

/// Convolution as gather + affine map.
#[derive(Debug, Clone)]
pub struct Conv {
    pub index: Rc<Vec<u32>>,
    pub rows: usize,
    pub linear: Linear,
}

impl Conv {
    pub fn forward<T: Float>(&self, g: &mut Graph<'_, T>, x: Var) -> Result<Var> {
        let cols = self.linear.in_dim;
        let patches = g.gather(x, self.index.clone(), &[self.rows, cols])?;
        Ok(self.linear.forward(g, patches)?)
    }
}

#[derive(Debug, Clone)]
enum Layer {
    Conv(Conv),
    /// `relu(x + conv2(relu(conv1(x))))`.
    Residual(Conv, Conv),
}

impl Layer {
    fn forward<T: Float>(&self, g: &mut Graph<'_, T>, x: Var) -> Result<Var> {
        match self {
            Layer::Conv(c) => {
                let y = c.forward(g, x)?;
                Ok(g.relu(y))
            }
            Layer::Residual(a, b) => {
                let h = a.forward(g, x)?;
                let h = g.relu(h);
                let h = b.forward(g, h)?;
                let y = g.add(x, h)?;
                Ok(g.relu(y))
            }
        }
    }
}

#[derive(Debug, Clone)]
enum Backbone {
    Image {
        layers: Vec<Layer>,
        /// Constant `[cells, frames * s * s]` averaging matrix.
        pool: Rc<Vec<f64>>,
        pool_cols: usize,
    },
    Points {
        mlp: Vec<Linear>,
        frames: usize,
        points: usize,
    },
    Temporal {
        layers: Vec<Layer>,
    },
}

#[derive(Debug, Clone)]
pub struct TailoredEncoder {
    pub kind: ModalityKind,
    pub payload_shape: Vec<usize>,
    pub grid: (usize, usize),
    pub d_m: usize,
    backbone: Backbone,
    /// Per-cell map for image-like inputs, flat-to-grid map otherwise.
    pub mlp: Mlp,
}

struct Builder<'a, T: Float, R: Rng + ?Sized> {
    store: &'a mut ParamStore<T>,
    rng: &'a mut R,
    name: String,
    n: usize,
}

impl<T: Float, R: Rng + ?Sized> Builder<'_, T, R> {
    fn linear(&mut self, what: &str, i: usize, o: usize) -> Result<Linear> {
        self.n += 1;
        Ok(Linear::new(
            self.store,
            &format!("{}.{what}{}", self.name, self.n),
            i,
            o,
            true,
            self.rng,
        )?)
    }

    fn conv2d(&mut self, frames: usize, s: usize, cin: usize, cout: usize, stride: usize) -> Result<(Conv, usize)> {
        let (index, oh, ow) = conv2d_index(frames, s, s, cin, 3, stride, 1);
        let linear = self.linear("conv", 9 * cin, cout)?;
        Ok((
            Conv {
                index,
                rows: frames * oh * ow,
                linear,
            },
            oh,
        ))
    }

    fn conv1d(&mut self, len: usize, cin: usize, cout: usize, stride: usize) -> Result<(Conv, usize)> {
        let (index, out) = conv1d_index(len, cin, 3, stride, 1);
        let linear = self.linear("conv", 3 * cin, cout)?;
        Ok((
            Conv {
                index,
                rows: out,
                linear,
            },
            out,
        ))
    }
}

impl TailoredEncoder {
    pub fn new<T: Float, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        cfg: &ModelConfig,
        kind: ModalityKind,
        payload_shape: &[usize],
        rng: &mut R,
    ) -> Result<Self> {
        let name = format!("tailored.{}", kind.name());
        let cells = cfg.grid_cells();
        let bad = || ModelError::Payload(format!("{kind} payload shape {payload_shape:?} unsupported"));
        let mut b = Builder {
            store,
            rng,
            name: name.clone(),
            n: 0,
        };
        let (backbone, mlp_dims) = match kind.family() {
            Family::Image => {
                let [frames, h, w, c] = payload_shape[..] else {
                    return Err(bad());
                };
                if h != w || h == 0 || frames == 0 || c != kind.image_channels() {
                    return Err(bad());
                }
                let mut width = cfg.conv_width;
                let (stem, mut s) = b.conv2d(frames, h, c, width, 1)?;
                let mut layers = vec![Layer::Conv(stem)];
                let (r1, _) = b.conv2d(frames, s, width, width, 1)?;
                let (r2, _) = b.conv2d(frames, s, width, width, 1)?;
                layers.push(Layer::Residual(r1, r2));
                while s > cfg.grid_h.max(cfg.grid_w) && s >= 2 {
                    let next = (width * 2).min(4 * cfg.conv_width);
                    let (down, s2) = b.conv2d(frames, s, width, next, 2)?;
                    layers.push(Layer::Conv(down));
                    width = next;
                    s = s2;
                    let (r1, _) = b.conv2d(frames, s, width, width, 1)?;
                    let (r2, _) = b.conv2d(frames, s, width, width, 1)?;
                    layers.push(Layer::Residual(r1, r2));
                }
                let pool_cols = frames * s * s;
                let mut pool = vec![0.0; cells * pool_cols];
                for gy in 0..cfg.grid_h {
                    let (y0, y1) = pool_window(gy, s, cfg.grid_h);
                    for gx in 0..cfg.grid_w {
                        let (x0, x1) = pool_window(gx, s, cfg.grid_w);
                        let count = (frames * (y1 - y0) * (x1 - x0)) as f64;
                        let row = gy * cfg.grid_w + gx;
                        for f in 0..frames {
                            for y in y0..y1 {
                                for x in x0..x1 {
                                    pool[row * pool_cols + (f * s + y) * s + x] = 1.0 / count;
                                }
                            }
                        }
                    }
                }
                (
                    Backbone::Image {
                        layers,
                        pool: Rc::new(pool),
                        pool_cols,
                    },
                    (width, cfg.d_m, cfg.d_m),
                )
            }
            Family::PointSet => {
                let [frames, points, 3] = payload_shape[..] else {
                    return Err(bad());
                };
                if frames == 0 {
                    return Err(bad());
                }
                let pw = cfg.point_width;
                let mlp = vec![
                    b.linear("point", 3, pw)?,
                    b.linear("point", pw, pw)?,
                    b.linear("point", pw, 2 * pw)?,
                ];
                (
                    Backbone::Points { mlp, frames, points },
                    (frames * 2 * pw, cfg.d_m, cells * cfg.d_m),
                )
            }
            Family::Temporal => {
                let [len, sub] = payload_shape[..] else {
                    return Err(bad());
                };
                if len == 0 || sub == 0 {
                    return Err(bad());
                }
                let tw = cfg.temporal_width;
                let mut layers = Vec::new();
                let (stem, mut l) = b.conv1d(len, sub, tw, 1)?;
                layers.push(Layer::Conv(stem));
                let (r1, _) = b.conv1d(l, tw, tw, 1)?;
                let (r2, _) = b.conv1d(l, tw, tw, 1)?;
                layers.push(Layer::Residual(r1, r2));
                let (down, l2) = b.conv1d(l, tw, 2 * tw, if l >= 2 * TEMPORAL_STEPS { 2 } else { 1 })?;
                layers.push(Layer::Conv(down));
                l = l2;
                let (r1, _) = b.conv1d(l, 2 * tw, 2 * tw, 1)?;
                let (r2, _) = b.conv1d(l, 2 * tw, 2 * tw, 1)?;
                layers.push(Layer::Residual(r1, r2));
                (
                    Backbone::Temporal { layers },
                    (TEMPORAL_STEPS * 2 * tw, cfg.d_m, cells * cfg.d_m),
                )
            }
        };
        let mlp = Mlp::new(b.store, &format!("{name}.mlp"), mlp_dims, b.rng)?;
        Ok(Self {
            kind,
            payload_shape: payload_shape.to_vec(),
            grid: (cfg.grid_h, cfg.grid_w),
            d_m: cfg.d_m,
            backbone,
            mlp,
        })
    }

    pub fn cells(&self) -> usize {
        self.grid.0 * self.grid.1
    }

    /// `[h * w, d_m]` feature map, grid flattened row-major.
    pub fn forward<T: Float>(&self, g: &mut Graph<'_, T>, payload: &Payload) -> Result<Var> {
        if payload.shape() != self.payload_shape.as_slice() {
            return Err(ModelError::Payload(format!(
                "{} encoder built for {:?}, got {:?}",
                self.kind,
                self.payload_shape,
                payload.shape()
            )));
        }
        let s = payload.shape();
        let data = || -> Vec<T> { payload.data().iter().map(|&v| T::lit(v as f64)).collect() };
        match &self.backbone {
            Backbone::Image {
                layers,
                pool,
                pool_cols,
            } => {
                let c = s[3];
                let mut x = g.constant(Tensor::new([s[0] * s[1] * s[2], c], data())?);
                for l in layers {
                    x = l.forward(g, x)?;
                }
                let p = Tensor::new([self.cells(), *pool_cols], pool.iter().map(|&v| T::lit(v)).collect())?;
                let p = g.constant(p);
                let cellsv = g.matmul(p, x)?;
                self.mlp.forward(g, cellsv)
            }
            Backbone::Points { mlp, frames, points } => {
                let width = mlp.last().expect("point mlp").out_dim;
                let pooled = if *points == 0 {
                    g.constant(Tensor::zeros([*frames, width])?)
                } else {
                    let mut x = g.constant(Tensor::new([frames * points, 3], data())?);
                    for (i, l) in mlp.iter().enumerate() {
                        x = l.forward(g, x)?;
                        if i + 1 < mlp.len() {
                            x = g.relu(x);
                        }
                    }
                    let segments: Vec<Vec<usize>> =
                        (0..*frames).map(|f| (f * points..(f + 1) * points).collect()).collect();
                    g.segment_max(x, &segments)?
                };
                let flat = g.reshape(pooled, &[1, frames * width])?;
                let y = self.mlp.forward(g, flat)?;
                Ok(g.reshape(y, &[self.cells(), self.d_m])?)
            }
            Backbone::Temporal { layers } => {
                let mut x = g.constant(Tensor::new([s[0], s[1]], data())?);
                for l in layers {
                    x = l.forward(g, x)?;
                }
                let width = g.value(x).cols();
                let steps = if g.value(x).rows() >= TEMPORAL_STEPS {
                    g.adaptive_avg_pool(x, TEMPORAL_STEPS)?
                } else {
                    let rows = g.value(x).rows();
                    let idx: Vec<usize> = (0..TEMPORAL_STEPS).map(|i| i * rows / TEMPORAL_STEPS).collect();
                    g.index_rows(x, &idx)?
                };
                let flat = g.reshape(steps, &[1, TEMPORAL_STEPS * width])?;
                let y = self.mlp.forward(g, flat)?;
                Ok(g.reshape(y, &[self.cells(), self.d_m])?)
            }
        }
    }
}

/// Global average over the grid followed by a linear map to class logits.
#[derive(Debug, Clone)]
pub struct Stage1Head {
    pub linear: Linear,
}

impl Stage1Head {
    pub fn new<T: Float, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        kind: ModalityKind,
        d_m: usize,
        classes: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if classes < 2 {
            return Err(ModelError::Config(format!(
                "classifier needs at least 2 classes, got {classes}"
            )));
        }
        Ok(Self {
            linear: Linear::new(store, &format!("stage1_head.{}", kind.name()), d_m, classes, true, rng)?,
        })
    }

    /// `[cells, d_m]` features to `[1, C]` logits.
    pub fn forward<T: Float>(&self, g: &mut Graph<'_, T>, features: Var) -> Result<Var> {
        let pooled = g.mean_rows(features)?;
        Ok(self.linear.forward(g, pooled)?)
    }
}
