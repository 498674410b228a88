//! Forward kernels over [`Tensor`]s.
//!
//! These are the pure building blocks shared by the autodiff graph and by
//! callers that only need inference. Matrix products go through
//! `matrixmultiply`; every other reduction runs sequentially in row-major
//! order. Results are bitwise reproducible on a given machine.

use crate::error::{shape_err, Result, TensorError};
use crate::float::Float;
use crate::tensor::Tensor;

pub const LAYER_NORM_EPS: f64 = 1e-5;

/// `c[m,n] = a[m,k] * b[k,n]` on raw row-major buffers.
pub fn mm<T: Float>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut c = vec![T::zero(); m * n];
    T::gemm(m, k, n, a, (k, 1), b, (n, 1), &mut c);
    c
}

/// `c[m,n] = a[m,k] * b[n,k]^T`.
pub fn mm_bt<T: Float>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut c = vec![T::zero(); m * n];
    T::gemm(m, k, n, a, (k, 1), b, (1, k), &mut c);
    c
}

/// `c[m,n] = a[k,m]^T * b[k,n]`.
pub fn mm_at<T: Float>(a: &[T], b: &[T], k: usize, m: usize, n: usize) -> Vec<T> {
    let mut c = vec![T::zero(); m * n];
    T::gemm(m, k, n, a, (1, m), b, (n, 1), &mut c);
    c
}

/// Fixed-order dot product with four interleaved accumulators.
#[inline]
pub fn dot<T: Float>(a: &[T], b: &[T]) -> T {
    let mut acc = [T::zero(); 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let o = c * 4;
        acc[0] += a[o] * b[o];
        acc[1] += a[o + 1] * b[o + 1];
        acc[2] += a[o + 2] * b[o + 2];
        acc[3] += a[o + 3] * b[o + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for o in chunks * 4..a.len() {
        s += a[o] * b[o];
    }
    s
}

fn split_matrix_shape(shape: &[usize]) -> (&[usize], usize, usize) {
    match shape.len() {
        1 => (&[], 1, shape[0]),
        r => (&shape[..r - 2], shape[r - 2], shape[r - 1]),
    }
}

fn broadcast_batch(a: &[usize], b: &[usize]) -> Option<Vec<usize>> {
    let r = a.len().max(b.len());
    let mut out = vec![0; r];
    for i in 0..r {
        let ea = if i + a.len() >= r { a[i + a.len() - r] } else { 1 };
        let eb = if i + b.len() >= r { b[i + b.len() - r] } else { 1 };
        out[i] = match (ea, eb) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => return None,
        };
    }
    Some(out)
}

fn batch_offset(idx: &[usize], shape: &[usize]) -> usize {
    // Broadcast-aware flat offset of a batch index into a (possibly shorter) shape.
    let skip = idx.len() - shape.len();
    let mut o = 0;
    for (d, &e) in shape.iter().enumerate() {
        let i = if e == 1 { 0 } else { idx[skip + d] };
        o = o * e + i;
    }
    o
}

/// Matrix product with broadcasting over leading batch extents.
pub fn matmul<T: Float>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    if a.rank() < 2 || b.rank() < 2 {
        return Err(shape_err("matmul", a.shape(), b.shape()));
    }
    let (ba, m, k) = split_matrix_shape(a.shape());
    let (bb, k2, n) = split_matrix_shape(b.shape());
    if k != k2 {
        return Err(shape_err("matmul", a.shape(), b.shape()));
    }
    let batch = broadcast_batch(ba, bb).ok_or_else(|| shape_err("matmul", a.shape(), b.shape()))?;
    let count: usize = batch.iter().product();
    let mut out = Vec::with_capacity(count * m * n);
    let mut idx = vec![0usize; batch.len()];
    for _ in 0..count {
        let oa = batch_offset(&idx, ba) * m * k;
        let ob = batch_offset(&idx, bb) * k * n;
        out.extend(mm(&a.data()[oa..oa + m * k], &b.data()[ob..ob + k * n], m, k, n));
        for d in (0..idx.len()).rev() {
            idx[d] += 1;
            if idx[d] < batch[d] {
                break;
            }
            idx[d] = 0;
        }
    }
    let mut shape = batch;
    shape.extend([m, n]);
    Tensor::new(shape, out)
}

pub fn transpose<T: Float>(x: &Tensor<T>) -> Result<Tensor<T>> {
    if x.rank() != 2 {
        return Err(TensorError::InvalidShape {
            shape: x.shape().to_vec(),
            reason: "transpose expects a matrix".into(),
        });
    }
    let (r, c) = (x.shape()[0], x.shape()[1]);
    let d = x.data();
    let mut out = vec![T::zero(); r * c];
    for i in 0..r {
        for j in 0..c {
            out[j * r + i] = d[i * c + j];
        }
    }
    Tensor::new([c, r], out)
}

fn softmax_slice<T: Float>(row: &mut [T]) {
    let mut max = T::neg_infinity();
    for &v in row.iter() {
        if v > max {
            max = v;
        }
    }
    let mut sum = T::zero();
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

/// Softmax along the last axis; rows may contain `-inf` (masked) entries but
/// each row needs at least one finite value.
pub fn softmax_rows<T: Float>(x: &Tensor<T>) -> Result<Tensor<T>> {
    if x.has_nan() {
        return Err(TensorError::Numeric("NaN input to softmax".into()));
    }
    let mut out = x.clone().with_requires_grad(false);
    let c = x.cols();
    for row in out.data_mut().chunks_mut(c) {
        softmax_slice(row);
    }
    Ok(out)
}

/// Softmax along an arbitrary axis with max-subtraction.
pub fn softmax<T: Float>(x: &Tensor<T>, axis: usize) -> Result<Tensor<T>> {
    if axis >= x.rank() {
        return Err(TensorError::Config(format!(
            "axis {axis} out of range for rank {}",
            x.rank()
        )));
    }
    if x.has_nan() {
        return Err(TensorError::Numeric("NaN input to softmax".into()));
    }
    let shape = x.shape();
    let len = shape[axis];
    let inner: usize = shape[axis + 1..].iter().product();
    let outer: usize = shape[..axis].iter().product();
    let mut out = x.clone().with_requires_grad(false);
    let data = out.data_mut();
    let mut buf = vec![T::zero(); len];
    for o in 0..outer {
        for i in 0..inner {
            for (l, b) in buf.iter_mut().enumerate() {
                *b = data[(o * len + l) * inner + i];
            }
            softmax_slice(&mut buf);
            for (l, &b) in buf.iter().enumerate() {
                data[(o * len + l) * inner + i] = b;
            }
        }
    }
    Ok(out)
}

/// Row-wise normalisation to zero mean and unit variance (no affine).
/// Returns the normalised rows and the per-row reciprocal std.
pub fn layer_norm_rows<T: Float>(x: &Tensor<T>) -> (Tensor<T>, Vec<T>) {
    let c = x.cols();
    let n = T::lit(c as f64);
    let eps = T::lit(LAYER_NORM_EPS);
    let mut out = x.clone().with_requires_grad(false);
    let mut rstds = Vec::with_capacity(x.rows());
    for row in out.data_mut().chunks_mut(c) {
        let mut mean = T::zero();
        for &v in row.iter() {
            mean += v;
        }
        mean /= n;
        let mut var = T::zero();
        for &v in row.iter() {
            var += (v - mean) * (v - mean);
        }
        var /= n;
        let rstd = T::one() / (var + eps).sqrt();
        for v in row.iter_mut() {
            *v = (*v - mean) * rstd;
        }
        rstds.push(rstd);
    }
    (out, rstds)
}

/// Layer normalisation with optional per-column affine `gamma`, `beta`.
pub fn layer_norm<T: Float>(x: &Tensor<T>, affine: Option<(&Tensor<T>, &Tensor<T>)>) -> Result<Tensor<T>> {
    let (mut y, _) = layer_norm_rows(x);
    if let Some((g, b)) = affine {
        let c = x.cols();
        if g.numel() != c || b.numel() != c {
            return Err(shape_err("layer_norm", x.shape(), g.shape()));
        }
        for row in y.data_mut().chunks_mut(c) {
            for ((v, &gv), &bv) in row.iter_mut().zip(g.data()).zip(b.data()) {
                *v = *v * gv + bv;
            }
        }
    }
    Ok(y)
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

/// Tanh-approximated GELU.
#[inline]
pub fn gelu<T: Float>(x: T) -> T {
    let c = T::lit(GELU_C);
    let a = T::lit(GELU_A);
    let half = T::lit(0.5);
    half * x * (T::one() + (c * (x + a * x * x * x)).tanh())
}

#[inline]
pub fn gelu_grad<T: Float>(x: T) -> T {
    let c = T::lit(GELU_C);
    let a = T::lit(GELU_A);
    let half = T::lit(0.5);
    let inner = c * (x + a * x * x * x);
    let t = inner.tanh();
    let dinner = c * (T::one() + T::lit(3.0) * a * x * x);
    half * (T::one() + t) + half * x * (T::one() - t * t) * dinner
}

/// Window `[floor(i*n/n_out), ceil((i+1)*n/n_out))` of output row `i`.
#[inline]
pub fn pool_window(i: usize, n: usize, n_out: usize) -> (usize, usize) {
    let start = i * n / n_out;
    let end = ((i + 1) * n).div_ceil(n_out);
    (start, end)
}

/// 1-D adaptive average pooling along the row axis of an `[n, d]` matrix.
pub fn adaptive_avg_pool_1d<T: Float>(x: &Tensor<T>, n_out: usize) -> Result<Tensor<T>> {
    let n = x.rows();
    let d = x.cols();
    if n_out == 0 || n_out > n {
        return Err(TensorError::Pooling { n, n_out });
    }
    let src = x.data();
    let mut out = vec![T::zero(); n_out * d];
    for i in 0..n_out {
        let (s, e) = pool_window(i, n, n_out);
        let inv = T::one() / T::lit((e - s) as f64);
        let o = &mut out[i * d..(i + 1) * d];
        for r in s..e {
            for (ov, &xv) in o.iter_mut().zip(&src[r * d..(r + 1) * d]) {
                *ov += xv;
            }
        }
        for ov in o.iter_mut() {
            *ov *= inv;
        }
    }
    Tensor::new([n_out, d], out)
}

/// Mean negative log-softmax at the label index over a `[b, C]` logit matrix.
pub fn cross_entropy<T: Float>(logits: &Tensor<T>, labels: &[usize]) -> Result<T> {
    let c = logits.cols();
    if logits.rows() != labels.len() {
        return Err(shape_err("cross_entropy", logits.shape(), &[labels.len()]));
    }
    let mut total = T::zero();
    for (row, &l) in logits.data().chunks(c).zip(labels) {
        if l >= c {
            return Err(TensorError::Label { label: l, classes: c });
        }
        total += log_sum_exp(row) - row[l];
    }
    Ok(total / T::lit(labels.len() as f64))
}

pub fn log_sum_exp<T: Float>(row: &[T]) -> T {
    let mut max = T::neg_infinity();
    for &v in row {
        if v > max {
            max = v;
        }
    }
    let mut s = T::zero();
    for &v in row {
        s += (v - max).exp();
    }
    max + s.ln()
}

/// Feed-forward `linear -> GELU -> linear` with weights stored `[in, out]`.
pub fn ffn<T: Float>(
    x: &Tensor<T>,
    w1: &Tensor<T>,
    b1: &Tensor<T>,
    w2: &Tensor<T>,
    b2: &Tensor<T>,
) -> Result<Tensor<T>> {
    let h = linear(x, w1, Some(b1))?.map(gelu);
    linear(&h, w2, Some(b2))
}

/// `x[n, in] * w[in, out] + b`.
pub fn linear<T: Float>(x: &Tensor<T>, w: &Tensor<T>, b: Option<&Tensor<T>>) -> Result<Tensor<T>> {
    if w.rank() != 2 || x.cols() != w.shape()[0] {
        return Err(shape_err("linear", x.shape(), w.shape()));
    }
    let (n, k, m) = (x.rows(), w.shape()[0], w.shape()[1]);
    let mut out = mm(x.data(), w.data(), n, k, m);
    if let Some(b) = b {
        if b.numel() != m {
            return Err(shape_err("linear bias", w.shape(), b.shape()));
        }
        for row in out.chunks_mut(m) {
            for (o, &bv) in row.iter_mut().zip(b.data()) {
                *o += bv;
            }
        }
    }
    Tensor::new([n, m], out)
}

/// Multi-head scaled dot-product attention with identity projections.
///
/// Returns the `[q, d]` output and the per-head `[q, k]` weight matrices.
pub fn attention<T: Float>(
    q: &Tensor<T>,
    k: &Tensor<T>,
    v: &Tensor<T>,
    heads: usize,
) -> Result<(Tensor<T>, Vec<Tensor<T>>)> {
    let d = q.cols();
    if heads == 0 || d % heads != 0 {
        return Err(TensorError::Config(format!("width {d} not divisible by {heads} heads")));
    }
    if k.cols() != d || v.cols() != d || k.rows() != v.rows() {
        return Err(shape_err("attention", k.shape(), v.shape()));
    }
    let (nq, nk) = (q.rows(), k.rows());
    let dh = d / heads;
    let scale = T::lit(1.0 / (dh as f64).sqrt());
    let mut out = vec![T::zero(); nq * d];
    let mut weights = Vec::with_capacity(heads);
    for h in 0..heads {
        let slice = |t: &Tensor<T>| -> Vec<T> {
            t.data()
                .chunks(d)
                .flat_map(|r| r[h * dh..(h + 1) * dh].iter().copied())
                .collect()
        };
        let (qh, kh, vh) = (slice(q), slice(k), slice(v));
        let mut scores = mm_bt(&qh, &kh, nq, dh, nk);
        for s in scores.iter_mut() {
            *s *= scale;
        }
        let p = softmax_rows(&Tensor::new([nq, nk], scores)?)?;
        let oh = mm(p.data(), &vh, nq, nk, dh);
        for i in 0..nq {
            out[i * d + h * dh..i * d + (h + 1) * dh].copy_from_slice(&oh[i * dh..(i + 1) * dh]);
        }
        weights.push(p);
    }
    Ok((Tensor::new([nq, d], out)?, weights))
}
