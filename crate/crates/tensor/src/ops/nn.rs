//! Neural-network building blocks: softmax, layer normalisation, rotary
//! position rotation, causal masking and fused causal multi-head attention.

use crate::error::{Result, TensorError};
use crate::kernel::{gemm, MatMut, MatRef};
use crate::ops::shape::split_axis;
use crate::tensor::{Backward, Tensor};

/// Additive mask value for future positions. `exp(-1e9 - max)` underflows to
/// exactly zero, so masked positions get zero probability and zero gradient.
pub const MASK_VALUE: f64 = -1e9;

/// Base of the rotary frequency ladder.
pub const ROTARY_BASE: f64 = 10_000.0;

fn check_finite(op: &'static str, t: &Tensor) -> Result<()> {
    if t.data().iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(TensorError::NonFinite { op })
    }
}

struct SoftmaxOp {
    outer: usize,
    len: usize,
    inner: usize,
}
impl Backward for SoftmaxOp {
    fn backward(&self, _: &[Tensor], out: &[f64], grad: &[f64]) -> Vec<Option<Vec<f64>>> {
        let mut g = vec![0.0; out.len()];
        for o in 0..self.outer {
            for i in 0..self.inner {
                let idx = |j: usize| (o * self.len + j) * self.inner + i;
                let dot: f64 = (0..self.len).map(|j| grad[idx(j)] * out[idx(j)]).sum();
                for j in 0..self.len {
                    g[idx(j)] = out[idx(j)] * (grad[idx(j)] - dot);
                }
            }
        }
        vec![Some(g)]
    }
}

struct LayerNormOp {
    width: usize,
    normalized: Vec<f64>,
    inv_std: Vec<f64>,
}
impl Backward for LayerNormOp {
    fn backward(&self, inputs: &[Tensor], _: &[f64], grad: &[f64]) -> Vec<Option<Vec<f64>>> {
        let (x, gain, bias) = (&inputs[0], &inputs[1], &inputs[2]);
        let w = self.width;
        let n = w as f64;
        let gv = gain.data();
        let dx = x.requires_grad().then(|| {
            let mut dx = vec![0.0; grad.len()];
            for (r, (dy, xhat)) in grad
                .chunks_exact(w)
                .zip(self.normalized.chunks_exact(w))
                .enumerate()
            {
                let dxhat: Vec<f64> = dy.iter().zip(gv).map(|(d, g)| d * g).collect();
                let sum: f64 = dxhat.iter().sum();
                let dot: f64 = dxhat.iter().zip(xhat).map(|(a, b)| a * b).sum();
                let s = self.inv_std[r] / n;
                for j in 0..w {
                    dx[r * w + j] = s * (n * dxhat[j] - sum - xhat[j] * dot);
                }
            }
            dx
        });
        let dgain = gain.requires_grad().then(|| {
            let mut acc = vec![0.0; w];
            for (dy, xhat) in grad.chunks_exact(w).zip(self.normalized.chunks_exact(w)) {
                for j in 0..w {
                    acc[j] += dy[j] * xhat[j];
                }
            }
            acc
        });
        let dbias = bias.requires_grad().then(|| {
            let mut acc = vec![0.0; w];
            for dy in grad.chunks_exact(w) {
                acc.iter_mut().zip(dy).for_each(|(a, d)| *a += d);
            }
            acc
        });
        vec![dx, dgain, dbias]
    }
}

struct PassThrough;
impl Backward for PassThrough {
    fn backward(&self, _: &[Tensor], _: &[f64], grad: &[f64]) -> Vec<Option<Vec<f64>>> {
        vec![Some(grad.to_vec())]
    }
}

/// Cosine/sine table for rotary encoding, `[positions, head_dim / 2]`.
#[derive(Debug, Clone)]
pub struct RotaryTable {
    half: usize,
    cos: Vec<f64>,
    sin: Vec<f64>,
}

impl RotaryTable {
    /// Angles `(offset + m) * base^(-2i / head_dim)` for `m < len`.
    pub fn new(len: usize, head_dim: usize, offset: usize) -> Result<Self> {
        if head_dim == 0 || !head_dim.is_multiple_of(2) {
            return Err(TensorError::Config(format!(
                "rotary encoding needs an even head dimension, got {head_dim}"
            )));
        }
        let half = head_dim / 2;
        let mut cos = Vec::with_capacity(len * half);
        let mut sin = Vec::with_capacity(len * half);
        for m in 0..len {
            let pos = (offset + m) as f64;
            for i in 0..half {
                let theta = ROTARY_BASE.powf(-2.0 * i as f64 / head_dim as f64);
                let (s, c) = (pos * theta).sin_cos();
                cos.push(c);
                sin.push(s);
            }
        }
        Ok(RotaryTable { half, cos, sin })
    }

    /// Rotates consecutive pairs of `v` (length `head_dim`) by the angles of
    /// row `pos`; `sign = -1` applies the inverse rotation.
    fn rotate_into(&self, v: &[f64], pos: usize, sign: f64, out: &mut [f64]) {
        let row = pos * self.half;
        for i in 0..self.half {
            let (c, s) = (self.cos[row + i], sign * self.sin[row + i]);
            let (x0, x1) = (v[2 * i], v[2 * i + 1]);
            out[2 * i] = x0 * c - x1 * s;
            out[2 * i + 1] = x0 * s + x1 * c;
        }
    }
}

/// Rotates a single `head_dim`-vector as if it sat at sequence position `pos`.
pub fn rotate_at(v: &[f64], pos: usize) -> Result<Vec<f64>> {
    let table = RotaryTable::new(1, v.len(), pos)?;
    let mut out = vec![0.0; v.len()];
    table.rotate_into(v, 0, 1.0, &mut out);
    Ok(out)
}

fn apply_rotary(data: &[f64], len: usize, width: usize, head_dim: usize, table: &RotaryTable, sign: f64) -> Vec<f64> {
    let mut out = vec![0.0; data.len()];
    for (seq, dst) in data.chunks_exact(len * width).zip(out.chunks_exact_mut(len * width)) {
        for m in 0..len {
            for h in (0..width).step_by(head_dim) {
                let at = m * width + h;
                table.rotate_into(&seq[at..at + head_dim], m, sign, &mut dst[at..at + head_dim]);
            }
        }
    }
    out
}

struct RotaryOp {
    len: usize,
    width: usize,
    head_dim: usize,
    table: RotaryTable,
}
impl Backward for RotaryOp {
    fn backward(&self, _: &[Tensor], _: &[f64], grad: &[f64]) -> Vec<Option<Vec<f64>>> {
        vec![Some(apply_rotary(grad, self.len, self.width, self.head_dim, &self.table, -1.0))]
    }
}

/// Strided view of one head's `[len, head_dim]` block inside a
/// `[batch, len, width]` buffer.
struct HeadLayout {
    len: usize,
    width: usize,
    head_dim: usize,
}

impl HeadLayout {
    fn offset(&self, b: usize, h: usize) -> usize {
        b * self.len * self.width + h * self.head_dim
    }

    fn view<'a>(&self, data: &'a [f64], b: usize, h: usize) -> MatRef<'a> {
        MatRef {
            data,
            offset: self.offset(b, h),
            rows: self.len,
            cols: self.head_dim,
            row_stride: self.width,
            col_stride: 1,
        }
    }

    fn view_mut<'a>(&self, data: &'a mut [f64], b: usize, h: usize) -> MatMut<'a> {
        MatMut {
            data,
            offset: self.offset(b, h),
            rows: self.len,
            cols: self.head_dim,
            row_stride: self.width,
        }
    }
}

struct AttentionOp {
    batch: usize,
    len: usize,
    width: usize,
    heads: usize,
    scale: f64,
    probs: Vec<f64>,
}

impl Backward for AttentionOp {
    fn backward(&self, inputs: &[Tensor], _: &[f64], grad: &[f64]) -> Vec<Option<Vec<f64>>> {
        let (q, k, v) = (&inputs[0], &inputs[1], &inputs[2]);
        let (l, w) = (self.len, self.width);
        let dk = w / self.heads;
        let mut dq = vec![0.0; q.numel()];
        let mut dkey = vec![0.0; k.numel()];
        let mut dv = vec![0.0; v.numel()];
        let mut dp = vec![0.0; l * l];
        let heads = HeadLayout { len: l, width: w, head_dim: dk };
        let head = |data, b, h| heads.view(data, b, h);
        for b in 0..self.batch {
            for h in 0..self.heads {
                let p_off = (b * self.heads + h) * l * l;
                let p = MatRef::row_major(&self.probs, p_off, l, l);
                let dout = head(grad, b, h);
                // dV = P^T dO
                gemm(1.0, p.t(), dout, 0.0, heads.view_mut(&mut dv, b, h));
                // dP = dO V^T
                gemm(1.0, dout, head(v.data(), b, h).t(), 0.0, MatMut::row_major(&mut dp, 0, l, l));
                // dS = P * (dP - rowsum(dP * P)), scaled
                for i in 0..l {
                    let prow = &self.probs[p_off + i * l..p_off + (i + 1) * l];
                    let drow = &mut dp[i * l..(i + 1) * l];
                    let dot: f64 = prow.iter().zip(drow.iter()).map(|(a, b)| a * b).sum();
                    for (d, pv) in drow.iter_mut().zip(prow) {
                        *d = pv * (*d - dot) * self.scale;
                    }
                }
                let ds = MatRef::row_major(&dp, 0, l, l);
                gemm(1.0, ds, head(k.data(), b, h), 0.0, heads.view_mut(&mut dq, b, h));
                gemm(1.0, ds.t(), head(q.data(), b, h), 0.0, heads.view_mut(&mut dkey, b, h));
            }
        }
        vec![
            q.requires_grad().then_some(dq),
            k.requires_grad().then_some(dkey),
            v.requires_grad().then_some(dv),
        ]
    }
}

impl Tensor {
    /// Softmax along `axis`, computed after subtracting the per-slice maximum.
    pub fn softmax(&self, axis: usize) -> Result<Tensor> {
        if axis >= self.rank() {
            return Err(TensorError::InvalidAxis {
                op: "softmax",
                axis,
                rank: self.rank(),
            });
        }
        check_finite("softmax", self)?;
        let (outer, len, inner) = split_axis(self.shape(), axis);
        let x = self.data();
        let mut out = vec![0.0; x.len()];
        for o in 0..outer {
            for i in 0..inner {
                let idx = |j: usize| (o * len + j) * inner + i;
                let max = (0..len).map(|j| x[idx(j)]).fold(f64::NEG_INFINITY, f64::max);
                let mut total = 0.0;
                for j in 0..len {
                    let e = (x[idx(j)] - max).exp();
                    out[idx(j)] = e;
                    total += e;
                }
                for j in 0..len {
                    out[idx(j)] /= total;
                }
            }
        }
        Ok(Tensor::from_op(
            self.shape().to_vec(),
            out,
            vec![self.clone()],
            SoftmaxOp { outer, len, inner },
        ))
    }

    /// Normalises each row of the last axis to zero mean and unit variance,
    /// then applies `gain` and `bias` (both `[width]`).
    pub fn layer_norm(&self, gain: &Tensor, bias: &Tensor, eps: f64) -> Result<Tensor> {
        let width = *self.shape().last().expect("rank >= 1");
        for p in [gain, bias] {
            if p.shape() != [width] {
                return Err(TensorError::ShapeMismatch {
                    op: "layer_norm",
                    lhs: self.shape().to_vec(),
                    rhs: p.shape().to_vec(),
                });
            }
        }
        if eps <= 0.0 {
            return Err(TensorError::Config(format!("layer_norm epsilon must be > 0, got {eps}")));
        }
        let n = width as f64;
        let rows = self.numel() / width;
        let mut normalized = Vec::with_capacity(self.numel());
        let mut inv_std = Vec::with_capacity(rows);
        for row in self.data().chunks_exact(width) {
            let mean = row.iter().sum::<f64>() / n;
            let var = row.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
            let s = 1.0 / (var + eps).sqrt();
            inv_std.push(s);
            normalized.extend(row.iter().map(|x| (x - mean) * s));
        }
        let (g, b) = (gain.data(), bias.data());
        let out = normalized
            .chunks_exact(width)
            .flat_map(|row| row.iter().zip(g).zip(b).map(|((x, g), b)| x * g + b))
            .collect();
        Ok(Tensor::from_op(
            self.shape().to_vec(),
            out,
            vec![self.clone(), gain.clone(), bias.clone()],
            LayerNormOp {
                width,
                normalized,
                inv_std,
            },
        ))
    }

    /// Adds [`MASK_VALUE`] to entries strictly above the diagonal of the last
    /// two (square) axes.
    pub fn causal_mask(&self) -> Result<Tensor> {
        let r = self.rank();
        if r < 2 || self.shape()[r - 1] != self.shape()[r - 2] {
            return Err(TensorError::ShapeMismatch {
                op: "causal_mask",
                lhs: self.shape().to_vec(),
                rhs: vec![],
            });
        }
        let l = self.shape()[r - 1];
        let mut out = self.data().to_vec();
        for block in out.chunks_exact_mut(l * l) {
            for i in 0..l {
                for v in &mut block[i * l + i + 1..(i + 1) * l] {
                    *v += MASK_VALUE;
                }
            }
        }
        Ok(Tensor::from_op(
            self.shape().to_vec(),
            out,
            vec![self.clone()],
            PassThrough,
        ))
    }

    /// Rotary position encoding over a `[..., len, width]` tensor whose last
    /// axis holds consecutive heads of size `head_dim`. Pairs `(2i, 2i+1)` of
    /// each head at position `m` are rotated by `m * 10000^(-2i/head_dim)`.
    pub fn rotary(&self, head_dim: usize) -> Result<Tensor> {
        let r = self.rank();
        if r < 2 {
            return Err(TensorError::InvalidAxis {
                op: "rotary",
                axis: 1,
                rank: r,
            });
        }
        let (len, width) = (self.shape()[r - 2], self.shape()[r - 1]);
        if head_dim == 0 || width % head_dim != 0 {
            return Err(TensorError::Config(format!(
                "width {width} is not a multiple of head dimension {head_dim}"
            )));
        }
        let table = RotaryTable::new(len, head_dim, 0)?;
        let out = apply_rotary(self.data(), len, width, head_dim, &table, 1.0);
        Ok(Tensor::from_op(
            self.shape().to_vec(),
            out,
            vec![self.clone()],
            RotaryOp {
                len,
                width,
                head_dim,
                table,
            },
        ))
    }

    /// Fused causal multi-head attention.
    ///
    /// `q`, `k`, `v` are `[batch, len, width]` with heads laid out as
    /// consecutive blocks of `width / heads` features. For each head,
    /// `softmax(q k^T / sqrt(d) + mask) v`; the head outputs are written back
    /// into their blocks (i.e. concatenated).
    pub fn causal_attention(q: &Tensor, k: &Tensor, v: &Tensor, heads: usize) -> Result<Tensor> {
        if q.rank() != 3 || q.shape() != k.shape() || q.shape() != v.shape() {
            return Err(TensorError::ShapeMismatch {
                op: "causal_attention",
                lhs: q.shape().to_vec(),
                rhs: if q.shape() != k.shape() { k.shape() } else { v.shape() }.to_vec(),
            });
        }
        let (batch, l, w) = (q.shape()[0], q.shape()[1], q.shape()[2]);
        if heads == 0 || w % heads != 0 {
            return Err(TensorError::Config(format!(
                "width {w} is not divisible by {heads} heads"
            )));
        }
        for t in [q, k, v] {
            check_finite("causal_attention", t)?;
        }
        let dk = w / heads;
        let scale = 1.0 / (dk as f64).sqrt();
        let mut probs = vec![0.0; batch * heads * l * l];
        let mut out = vec![0.0; batch * l * w];
        let layout = HeadLayout { len: l, width: w, head_dim: dk };
        let head = |data, b, h| layout.view(data, b, h);
        for b in 0..batch {
            for h in 0..heads {
                let p_off = (b * heads + h) * l * l;
                let scores = MatMut::row_major(&mut probs, p_off, l, l);
                gemm(scale, head(q.data(), b, h), head(k.data(), b, h).t(), 0.0, scores);
                for i in 0..l {
                    let row = &mut probs[p_off + i * l..p_off + (i + 1) * l];
                    let max = row[..=i].iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    let mut total = 0.0;
                    for v in &mut row[..=i] {
                        *v = (*v - max).exp();
                        total += *v;
                    }
                    row[..=i].iter_mut().for_each(|v| *v /= total);
                    row[i + 1..].iter_mut().for_each(|v| *v = 0.0);
                }
                let p = MatRef::row_major(&probs, p_off, l, l);
                gemm(1.0, p, head(v.data(), b, h), 0.0, layout.view_mut(&mut out, b, h));
            }
        }
        Ok(Tensor::from_op(
            q.shape().to_vec(),
            out,
            vec![q.clone(), k.clone(), v.clone()],
            AttentionOp {
                batch,
                len: l,
                width: w,
                heads,
                scale,
                probs,
            },
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_softmax() {
        let x = Tensor::new(&[3], vec![0.0; 3]).unwrap();
        let y = x.softmax(0).unwrap();
        for v in y.data() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_is_stable_for_large_logits() {
        let x = Tensor::new(&[2], vec![1000.0, 0.0]).unwrap();
        let y = x.softmax(0).unwrap();
        assert_eq!(y.data()[0], 1.0);
        assert!(y.data()[1] < 1e-300);
        assert!(y.data().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn softmax_rejects_non_finite() {
        let x = Tensor::new(&[2], vec![f64::NAN, 0.0]).unwrap();
        assert!(matches!(x.softmax(0), Err(TensorError::NonFinite { .. })));
        let x = Tensor::new(&[2], vec![f64::INFINITY, 0.0]).unwrap();
        assert!(x.softmax(0).is_err());
    }

    #[test]
    fn softmax_along_first_axis() {
        let x = Tensor::new(&[2, 2], vec![0.0, 1.0, 0.0, 3.0]).unwrap();
        let y = x.softmax(0).unwrap();
        assert!((y.data()[0] - 0.5).abs() < 1e-15);
        assert!((y.data()[1] + y.data()[3] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn layer_norm_constant_row_is_zero() {
        let x = Tensor::new(&[1, 4], vec![3.0; 4]).unwrap();
        let g = Tensor::ones(&[4]).unwrap();
        let b = Tensor::zeros(&[4]).unwrap();
        let y = x.layer_norm(&g, &b, 1e-5).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rotary_position_zero_is_identity() {
        let v = [0.3, -1.2, 2.0, 0.7];
        assert_eq!(rotate_at(&v, 0).unwrap(), v.to_vec());
    }

    #[test]
    fn rotary_rejects_odd_head_dim() {
        assert!(matches!(rotate_at(&[1.0, 2.0, 3.0], 1), Err(TensorError::Config(_))));
        let x = Tensor::ones(&[2, 6]).unwrap();
        assert!(x.rotary(3).is_err());
    }

    #[test]
    fn causal_mask_hits_upper_triangle_only() {
        let x = Tensor::zeros(&[2, 2]).unwrap();
        assert_eq!(x.causal_mask().unwrap().data(), &[0.0, MASK_VALUE, 0.0, 0.0]);
    }

    #[test]
    fn single_position_attention_returns_values() {
        let q = Tensor::new(&[1, 1, 4], vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let k = Tensor::new(&[1, 1, 4], vec![1.0, -1.0, 0.5, 2.0]).unwrap();
        let v = Tensor::new(&[1, 1, 4], vec![5.0, 6.0, 7.0, 8.0]).unwrap();
        let o = Tensor::causal_attention(&q, &k, &v, 2).unwrap();
        assert_eq!(o.data(), v.data());
    }
}
