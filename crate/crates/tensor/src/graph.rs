//! Tape-based reverse-mode differentiation.
//!
//! A [`Graph`] records every operation as a node holding its forward value.
//! [`Graph::backward`] walks the tape in reverse and returns gradients for the
//! trainable parameters that took part in the computation. Frozen parameters
//! and constants never receive gradient, and nodes that depend only on them
//! are skipped during the backward sweep.

use std::collections::HashMap;
use std::rc::Rc;

use crate::error::{shape_err, Result, TensorError};
use crate::float::Float;
use crate::ops;
use crate::param::{Gradients, ParamId, ParamStore};
use crate::tensor::Tensor;

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Sentinel for "no source element" in a gather index (reads as zero).
pub const GATHER_PAD: u32 = u32::MAX;

enum Op<T> {
    Leaf,
    Param(ParamId),
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    MatMul(Var, Var),
    MatMulBt(Var, Var),
    Transpose(Var),
    Softmax(Var),
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        norm: Tensor<T>,
        rstd: Vec<T>,
    },
    Gelu(Var),
    Relu(Var),
    SliceCols {
        x: Var,
        start: usize,
    },
    SliceRows {
        x: Var,
        start: usize,
    },
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    Gather {
        x: Var,
        index: Rc<Vec<u32>>,
    },
    Reshape(Var),
    MeanRows(Var),
    SegmentMax {
        x: Var,
        argmax: Vec<u32>,
    },
    AvgPoolRows(Var),
    IndexRows {
        x: Var,
        ids: Vec<usize>,
    },
    CrossEntropy {
        logits: Var,
        targets: Vec<Option<usize>>,
        probs: Tensor<T>,
        count: usize,
    },
    Sum(Var),
}

struct Node<T> {
    value: Option<Tensor<T>>,
    op: Op<T>,
    requires_grad: bool,
}

pub struct Graph<'p, T: Float> {
    store: Option<&'p ParamStore<T>>,
    nodes: Vec<Node<T>>,
    param_vars: HashMap<ParamId, Var>,
    track: bool,
}

impl<'p, T: Float> Graph<'p, T> {
    /// Graph without parameters (only inputs and constants).
    pub fn new() -> Self {
        Self {
            store: None,
            nodes: Vec::new(),
            param_vars: HashMap::new(),
            track: true,
        }
    }

    pub fn with_params(store: &'p ParamStore<T>) -> Self {
        Self {
            store: Some(store),
            nodes: Vec::new(),
            param_vars: HashMap::new(),
            track: true,
        }
    }

    /// Graph that never tracks gradients; `backward` returns nothing.
    pub fn inference(store: &'p ParamStore<T>) -> Self {
        Self {
            track: false,
            ..Self::with_params(store)
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        let node = &self.nodes[v.0];
        match (&node.value, &node.op) {
            (Some(t), _) => t,
            (None, Op::Param(id)) => self.store.expect("param graph").value(*id),
            _ => unreachable!("node without value"),
        }
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.value(v).shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, inputs: &[Var]) -> Var {
        let requires_grad = self.track && inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value: Some(value.with_requires_grad(false)),
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Input leaf; tracks gradient iff the tensor's `requires_grad` is set.
    pub fn input(&mut self, t: Tensor<T>) -> Var {
        let rg = self.track && t.requires_grad();
        self.nodes.push(Node {
            value: Some(t),
            op: Op::Leaf,
            requires_grad: rg,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, t: Tensor<T>) -> Var {
        self.input(t.with_requires_grad(false))
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(&v) = self.param_vars.get(&id) {
            return v;
        }
        let store = self.store.expect("graph was built without a parameter store");
        let rg = self.track && !store.is_frozen(id);
        self.nodes.push(Node {
            value: None,
            op: Op::Param(id),
            requires_grad: rg,
        });
        let v = Var(self.nodes.len() - 1);
        self.param_vars.insert(id, v);
        v
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).add(self.value(b))?;
        Ok(self.push(out, Op::Add(a, b), &[a, b]))
    }

    /// `x[n, c] + b[c]`, broadcasting `b` over rows.
    pub fn add_row(&mut self, x: Var, b: Var) -> Result<Var> {
        let xv = self.value(x);
        let bv = self.value(b);
        let c = xv.cols();
        if bv.numel() != c {
            return Err(shape_err("add_row", xv.shape(), bv.shape()));
        }
        let mut out = xv.clone();
        for row in out.data_mut().chunks_mut(c) {
            for (o, &bb) in row.iter_mut().zip(bv.data()) {
                *o += bb;
            }
        }
        Ok(self.push(out, Op::AddRow(x, b), &[x, b]))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).zip_map(self.value(b), "mul", |x, y| x * y)?;
        Ok(self.push(out, Op::Mul(a, b), &[a, b]))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let s = T::lit(s);
        let out = self.value(a).scale(s);
        self.push(out, Op::Scale(a, s), &[a])
    }

    fn mat_dims(&self, v: Var, op: &'static str) -> Result<(usize, usize)> {
        let t = self.value(v);
        if t.rank() != 2 {
            return Err(TensorError::InvalidShape {
                shape: t.shape().to_vec(),
                reason: format!("{op} expects a matrix"),
            });
        }
        Ok((t.shape()[0], t.shape()[1]))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.mat_dims(a, "matmul")?;
        let (k2, n) = self.mat_dims(b, "matmul")?;
        if k != k2 {
            return Err(shape_err("matmul", self.shape(a), self.shape(b)));
        }
        let out = ops::mm(self.value(a).data(), self.value(b).data(), m, k, n);
        let out = Tensor::new([m, n], out)?;
        Ok(self.push(out, Op::MatMul(a, b), &[a, b]))
    }

    /// `a[m, k] * b[n, k]^T`.
    pub fn matmul_bt(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.mat_dims(a, "matmul_bt")?;
        let (n, k2) = self.mat_dims(b, "matmul_bt")?;
        if k != k2 {
            return Err(shape_err("matmul_bt", self.shape(a), self.shape(b)));
        }
        let out = ops::mm_bt(self.value(a).data(), self.value(b).data(), m, k, n);
        let out = Tensor::new([m, n], out)?;
        Ok(self.push(out, Op::MatMulBt(a, b), &[a, b]))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let out = ops::transpose(self.value(a))?;
        Ok(self.push(out, Op::Transpose(a), &[a]))
    }

    /// Softmax over the last axis.
    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        let out = ops::softmax_rows(self.value(a))?;
        Ok(self.push(out, Op::Softmax(a), &[a]))
    }

    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Result<Var> {
        let xv = self.value(x);
        let c = xv.cols();
        let (g, b) = (self.value(gamma), self.value(beta));
        if g.numel() != c || b.numel() != c {
            return Err(shape_err("layer_norm", xv.shape(), g.shape()));
        }
        let (norm, rstd) = ops::layer_norm_rows(xv);
        let mut out = norm.clone();
        for row in out.data_mut().chunks_mut(c) {
            for ((o, &gv), &bv) in row.iter_mut().zip(g.data()).zip(b.data()) {
                *o = *o * gv + bv;
            }
        }
        Ok(self.push(
            out,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                norm,
                rstd,
            },
            &[x, gamma, beta],
        ))
    }

    pub fn gelu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(ops::gelu);
        self.push(out, Op::Gelu(a), &[a])
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| x.max(T::zero()));
        self.push(out, Op::Relu(a), &[a])
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let xv = self.value(x);
        let (r, c) = (xv.rows(), xv.cols());
        if len == 0 || start + len > c {
            return Err(TensorError::InvalidShape {
                shape: xv.shape().to_vec(),
                reason: format!("column slice {start}..{} out of range", start + len),
            });
        }
        let data: Vec<T> = xv
            .data()
            .chunks(c)
            .flat_map(|row| row[start..start + len].iter().copied())
            .collect();
        let out = Tensor::new([r, len], data)?;
        Ok(self.push(out, Op::SliceCols { x, start }, &[x]))
    }

    pub fn slice_rows(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let xv = self.value(x);
        let (r, c) = (xv.rows(), xv.cols());
        if len == 0 || start + len > r {
            return Err(TensorError::InvalidShape {
                shape: xv.shape().to_vec(),
                reason: format!("row slice {start}..{} out of range", start + len),
            });
        }
        let out = Tensor::new([len, c], xv.data()[start * c..(start + len) * c].to_vec())?;
        Ok(self.push(out, Op::SliceRows { x, start }, &[x]))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts
            .first()
            .ok_or_else(|| TensorError::Config("concat of zero tensors".into()))?;
        let r = self.value(first).rows();
        let mut total = 0;
        for &p in parts {
            let pv = self.value(p);
            if pv.rows() != r {
                return Err(shape_err("concat_cols", self.shape(first), pv.shape()));
            }
            total += pv.cols();
        }
        let mut data = Vec::with_capacity(r * total);
        for i in 0..r {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(i));
            }
        }
        let out = Tensor::new([r, total], data)?;
        Ok(self.push(out, Op::ConcatCols(parts.to_vec()), parts))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let vals: Vec<&Tensor<T>> = parts.iter().map(|&p| self.value(p)).collect();
        let out = Tensor::concat_rows(&vals)?;
        Ok(self.push(out, Op::ConcatRows(parts.to_vec()), parts))
    }

    /// Flat gather: output element `j` reads `x[index[j]]`, or zero when the
    /// index is [`GATHER_PAD`].
    pub fn gather(&mut self, x: Var, index: Rc<Vec<u32>>, shape: &[usize]) -> Result<Var> {
        let xv = self.value(x);
        let n: usize = shape.iter().product();
        if n != index.len() {
            return Err(shape_err("gather", shape, &[index.len()]));
        }
        let src = xv.data();
        let mut data = Vec::with_capacity(n);
        for &i in index.iter() {
            data.push(if i == GATHER_PAD {
                T::zero()
            } else {
                *src.get(i as usize)
                    .ok_or_else(|| shape_err("gather", xv.shape(), &[i as usize]))?
            });
        }
        let out = Tensor::new(shape.to_vec(), data)?;
        Ok(self.push(out, Op::Gather { x, index }, &[x]))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let out = self.value(x).reshape(shape.to_vec())?;
        Ok(self.push(out, Op::Reshape(x), &[x]))
    }

    /// Mean over rows: `[n, c] -> [1, c]`.
    pub fn mean_rows(&mut self, x: Var) -> Result<Var> {
        let out = ops::adaptive_avg_pool_1d(self.value(x), 1)?;
        Ok(self.push(out, Op::MeanRows(x), &[x]))
    }

    /// Column-wise max over each row group. Empty groups yield zeros.
    pub fn segment_max(&mut self, x: Var, segments: &[Vec<usize>]) -> Result<Var> {
        let xv = self.value(x);
        let (r, c) = (xv.rows(), xv.cols());
        let mut data = vec![T::zero(); segments.len() * c];
        let mut argmax = vec![GATHER_PAD; segments.len() * c];
        for (s, rows) in segments.iter().enumerate() {
            for &row in rows {
                if row >= r {
                    return Err(shape_err("segment_max", xv.shape(), &[row]));
                }
                let src = xv.row(row);
                for j in 0..c {
                    let o = s * c + j;
                    if argmax[o] == GATHER_PAD || src[j] > data[o] {
                        data[o] = src[j];
                        argmax[o] = row as u32;
                    }
                }
            }
        }
        let out = Tensor::new(
            [segments.len().max(1), c],
            if segments.is_empty() { vec![T::zero(); c] } else { data },
        )?;
        Ok(self.push(out, Op::SegmentMax { x, argmax }, &[x]))
    }

    pub fn adaptive_avg_pool(&mut self, x: Var, n_out: usize) -> Result<Var> {
        let out = ops::adaptive_avg_pool_1d(self.value(x), n_out)?;
        Ok(self.push(out, Op::AvgPoolRows(x), &[x]))
    }

    /// Row lookup (embedding): `[V, c]` indexed by `ids` -> `[len, c]`.
    pub fn index_rows(&mut self, x: Var, ids: &[usize]) -> Result<Var> {
        let xv = self.value(x);
        let (r, c) = (xv.rows(), xv.cols());
        if ids.is_empty() {
            return Err(TensorError::Config("index_rows with no ids".into()));
        }
        let mut data = Vec::with_capacity(ids.len() * c);
        for &i in ids {
            if i >= r {
                return Err(TensorError::Label { label: i, classes: r });
            }
            data.extend_from_slice(xv.row(i));
        }
        let out = Tensor::new([ids.len(), c], data)?;
        Ok(self.push(out, Op::IndexRows { x, ids: ids.to_vec() }, &[x]))
    }

    /// Mean cross-entropy over rows whose target is `Some`. With no valid
    /// target the loss is zero.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[Option<usize>]) -> Result<Var> {
        let lv = self.value(logits);
        let c = lv.cols();
        if lv.rows() != targets.len() {
            return Err(shape_err("cross_entropy", lv.shape(), &[targets.len()]));
        }
        if lv.has_nan() {
            return Err(TensorError::Numeric("NaN logits".into()));
        }
        let probs = ops::softmax_rows(lv)?;
        let mut total = T::zero();
        let mut count = 0;
        for (row, t) in lv.data().chunks(c).zip(targets) {
            if let Some(t) = *t {
                if t >= c {
                    return Err(TensorError::Label { label: t, classes: c });
                }
                total += ops::log_sum_exp(row) - row[t];
                count += 1;
            }
        }
        let loss = if count > 0 {
            total / T::lit(count as f64)
        } else {
            T::zero()
        };
        Ok(self.push(
            Tensor::scalar(loss),
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                probs,
                count,
            },
            &[logits],
        ))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).sum();
        self.push(Tensor::scalar(s), Op::Sum(x), &[x])
    }

    pub fn scalar_value(&self, v: Var) -> T {
        self.value(v).data()[0]
    }

    /// Reverse sweep from a single-element output.
    pub fn backward(&self, out: Var) -> Result<Gradients<T>> {
        let n_params = self.store.map_or(0, |s| s.len());
        let mut result = Gradients::empty(n_params);
        if !self.nodes[out.0].requires_grad {
            return Ok(result);
        }
        if self.value(out).numel() != 1 {
            return Err(TensorError::InvalidShape {
                shape: self.shape(out).to_vec(),
                reason: "backward requires a scalar output".into(),
            });
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..=out.0).map(|_| None).collect();
        grads[out.0] = Some(Tensor::full(self.shape(out).to_vec(), T::one())?);

        for i in (0..=out.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            if !g.is_finite() {
                let what = match &node.op {
                    Op::Param(id) => self.store.expect("store").get(*id).name.clone(),
                    _ => format!("node {i}"),
                };
                return Err(TensorError::Numeric(format!("non-finite gradient at {what}")));
            }
            self.backprop_node(i, g, &mut grads, &mut result)?;
        }
        Ok(result)
    }

    fn acc(&self, grads: &mut [Option<Tensor<T>>], v: Var, g: Tensor<T>) -> Result<()> {
        if !self.nodes[v.0].requires_grad {
            return Ok(());
        }
        match &mut grads[v.0] {
            Some(existing) => existing.axpy(T::one(), &g)?,
            slot @ None => *slot = Some(g),
        }
        Ok(())
    }

    fn zeros_like(&self, v: Var) -> Result<Tensor<T>> {
        Tensor::zeros(self.shape(v).to_vec())
    }

    fn backprop_node(
        &self,
        i: usize,
        g: Tensor<T>,
        grads: &mut [Option<Tensor<T>>],
        result: &mut Gradients<T>,
    ) -> Result<()> {
        let rg = |v: Var| self.nodes[v.0].requires_grad;
        match &self.nodes[i].op {
            Op::Leaf => {}
            Op::Param(id) => result.set(*id, g),
            Op::Add(a, b) => {
                if rg(*a) {
                    self.acc(grads, *a, g.clone())?;
                }
                self.acc(grads, *b, g)?;
            }
            Op::AddRow(x, b) => {
                if rg(*b) {
                    let c = g.cols();
                    let mut gb = vec![T::zero(); c];
                    for row in g.data().chunks(c) {
                        for (o, &v) in gb.iter_mut().zip(row) {
                            *o += v;
                        }
                    }
                    let gb = Tensor::new(self.shape(*b).to_vec(), gb)?;
                    self.acc(grads, *b, gb)?;
                }
                self.acc(grads, *x, g)?;
            }
            Op::Mul(a, b) => {
                if rg(*a) {
                    let ga = g.zip_map(self.value(*b), "mul", |x, y| x * y)?;
                    self.acc(grads, *a, ga)?;
                }
                if rg(*b) {
                    let gb = g.zip_map(self.value(*a), "mul", |x, y| x * y)?;
                    self.acc(grads, *b, gb)?;
                }
            }
            Op::Scale(a, s) => {
                let s = *s;
                self.acc(grads, *a, g.map(|x| x * s))?;
            }
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (m, k, n) = (av.shape()[0], av.shape()[1], bv.shape()[1]);
                if rg(*a) {
                    let ga = ops::mm_bt(g.data(), bv.data(), m, n, k);
                    self.acc(grads, *a, Tensor::new([m, k], ga)?)?;
                }
                if rg(*b) {
                    let gb = ops::mm_at(av.data(), g.data(), m, k, n);
                    self.acc(grads, *b, Tensor::new([k, n], gb)?)?;
                }
            }
            Op::MatMulBt(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (m, k, n) = (av.shape()[0], av.shape()[1], bv.shape()[0]);
                if rg(*a) {
                    let ga = ops::mm(g.data(), bv.data(), m, n, k);
                    self.acc(grads, *a, Tensor::new([m, k], ga)?)?;
                }
                if rg(*b) {
                    let gb = ops::mm_at(g.data(), av.data(), m, n, k);
                    self.acc(grads, *b, Tensor::new([n, k], gb)?)?;
                }
            }
            Op::Transpose(a) => {
                self.acc(grads, *a, ops::transpose(&g)?)?;
            }
            Op::Softmax(a) => {
                let y = self.nodes[i].value.as_ref().expect("softmax output");
                let c = y.cols();
                let mut gx = g;
                for (grow, yrow) in gx.data_mut().chunks_mut(c).zip(y.data().chunks(c)) {
                    let mut d = T::zero();
                    for (&gv, &yv) in grow.iter().zip(yrow) {
                        d += gv * yv;
                    }
                    for (gv, &yv) in grow.iter_mut().zip(yrow) {
                        *gv = yv * (*gv - d);
                    }
                }
                self.acc(grads, *a, gx)?;
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                norm,
                rstd,
            } => {
                let c = norm.cols();
                let gv = self.value(*gamma);
                if rg(*gamma) {
                    let mut gg = vec![T::zero(); c];
                    for (grow, nrow) in g.data().chunks(c).zip(norm.data().chunks(c)) {
                        for j in 0..c {
                            gg[j] += grow[j] * nrow[j];
                        }
                    }
                    self.acc(grads, *gamma, Tensor::new(gv.shape().to_vec(), gg)?)?;
                }
                if rg(*beta) {
                    let mut gb = vec![T::zero(); c];
                    for grow in g.data().chunks(c) {
                        for j in 0..c {
                            gb[j] += grow[j];
                        }
                    }
                    self.acc(grads, *beta, Tensor::new(self.shape(*beta).to_vec(), gb)?)?;
                }
                if rg(*x) {
                    let nf = T::lit(c as f64);
                    let mut gx = vec![T::zero(); g.numel()];
                    for (r, ((grow, nrow), out)) in g
                        .data()
                        .chunks(c)
                        .zip(norm.data().chunks(c))
                        .zip(gx.chunks_mut(c))
                        .enumerate()
                    {
                        let mut s1 = T::zero();
                        let mut s2 = T::zero();
                        for j in 0..c {
                            let dy = grow[j] * gv.data()[j];
                            s1 += dy;
                            s2 += dy * nrow[j];
                        }
                        let k = rstd[r] / nf;
                        for j in 0..c {
                            let dy = grow[j] * gv.data()[j];
                            out[j] = k * (nf * dy - s1 - nrow[j] * s2);
                        }
                    }
                    self.acc(grads, *x, Tensor::new(self.shape(*x).to_vec(), gx)?)?;
                }
            }
            Op::Gelu(a) => {
                let gx = g.zip_map(self.value(*a), "gelu", |gv, xv| gv * ops::gelu_grad(xv))?;
                self.acc(grads, *a, gx)?;
            }
            Op::Relu(a) => {
                let gx = g.zip_map(
                    self.value(*a),
                    "relu",
                    |gv, xv| if xv > T::zero() { gv } else { T::zero() },
                )?;
                self.acc(grads, *a, gx)?;
            }
            Op::SliceCols { x, start } => {
                let mut gx = self.zeros_like(*x)?;
                let c = gx.cols();
                let len = g.cols();
                for (dst, src) in gx.data_mut().chunks_mut(c).zip(g.data().chunks(len)) {
                    dst[*start..*start + len].copy_from_slice(src);
                }
                self.acc(grads, *x, gx)?;
            }
            Op::SliceRows { x, start } => {
                let mut gx = self.zeros_like(*x)?;
                let c = gx.cols();
                gx.data_mut()[start * c..start * c + g.numel()].copy_from_slice(g.data());
                self.acc(grads, *x, gx)?;
            }
            Op::ConcatCols(parts) => {
                let total = g.cols();
                let mut off = 0;
                for &p in parts {
                    let pc = self.value(p).cols();
                    if rg(p) {
                        let data: Vec<T> = g
                            .data()
                            .chunks(total)
                            .flat_map(|row| row[off..off + pc].iter().copied())
                            .collect();
                        self.acc(grads, p, Tensor::new(self.shape(p).to_vec(), data)?)?;
                    }
                    off += pc;
                }
            }
            Op::ConcatRows(parts) => {
                let mut off = 0;
                for &p in parts {
                    let n = self.value(p).numel();
                    if rg(p) {
                        let data = g.data()[off..off + n].to_vec();
                        self.acc(grads, p, Tensor::new(self.shape(p).to_vec(), data)?)?;
                    }
                    off += n;
                }
            }
            Op::Gather { x, index } => {
                let mut gx = self.zeros_like(*x)?;
                let d = gx.data_mut();
                for (&src, &gv) in index.iter().zip(g.data()) {
                    if src != GATHER_PAD {
                        d[src as usize] += gv;
                    }
                }
                self.acc(grads, *x, gx)?;
            }
            Op::Reshape(x) => {
                let gx = g.reshape(self.shape(*x).to_vec())?;
                self.acc(grads, *x, gx)?;
            }
            Op::MeanRows(x) => {
                let xv = self.value(*x);
                let (r, c) = (xv.rows(), xv.cols());
                let inv = T::one() / T::lit(r as f64);
                let mut gx = self.zeros_like(*x)?;
                for row in gx.data_mut().chunks_mut(c) {
                    for (o, &gv) in row.iter_mut().zip(g.data()) {
                        *o = gv * inv;
                    }
                }
                self.acc(grads, *x, gx)?;
            }
            Op::SegmentMax { x, argmax } => {
                let mut gx = self.zeros_like(*x)?;
                let c = gx.cols();
                let d = gx.data_mut();
                for (o, (&src, &gv)) in argmax.iter().zip(g.data()).enumerate() {
                    if src != GATHER_PAD {
                        d[src as usize * c + o % c] += gv;
                    }
                }
                self.acc(grads, *x, gx)?;
            }
            Op::AvgPoolRows(x) => {
                let mut gx = self.zeros_like(*x)?;
                let (n, c) = (gx.rows(), gx.cols());
                let n_out = g.rows();
                let d = gx.data_mut();
                for o in 0..n_out {
                    let (s, e) = ops::pool_window(o, n, n_out);
                    let inv = T::one() / T::lit((e - s) as f64);
                    let grow = g.row(o);
                    for r in s..e {
                        for j in 0..c {
                            d[r * c + j] += grow[j] * inv;
                        }
                    }
                }
                self.acc(grads, *x, gx)?;
            }
            Op::IndexRows { x, ids } => {
                let mut gx = self.zeros_like(*x)?;
                let c = gx.cols();
                for (r, &id) in ids.iter().enumerate() {
                    let src = g.row(r);
                    for (o, &v) in gx.row_mut(id).iter_mut().zip(src) {
                        *o += v;
                    }
                }
                debug_assert_eq!(c, g.cols());
                self.acc(grads, *x, gx)?;
            }
            Op::CrossEntropy {
                logits,
                targets,
                probs,
                count,
            } => {
                if *count == 0 {
                    return Ok(());
                }
                let scale = g.data()[0] / T::lit(*count as f64);
                let c = probs.cols();
                let mut gl = probs.clone();
                for (row, t) in gl.data_mut().chunks_mut(c).zip(targets) {
                    match t {
                        Some(t) => {
                            row[*t] -= T::one();
                            for v in row.iter_mut() {
                                *v *= scale;
                            }
                        }
                        None => row.iter_mut().for_each(|v| *v = T::zero()),
                    }
                }
                self.acc(grads, *logits, gl)?;
            }
            Op::Sum(x) => {
                let gx = Tensor::full(self.shape(*x).to_vec(), g.data()[0])?;
                self.acc(grads, *x, gx)?;
            }
        }
        Ok(())
    }
}

impl<T: Float> Default for Graph<'_, T> {
    fn default() -> Self {
        Self::new()
    }
}
