use std::ops::Range;

use crate::error::{Result, TensorError};
use crate::tensor::{numel, Backward, Tensor};

/// Splits `shape` around `axis` into (outer, axis length, inner) extents.
pub(crate) fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

struct ReshapeOp;
impl Backward for ReshapeOp {
    fn backward(&self, _: &[Tensor], _: &[f64], grad: &[f64]) -> Vec<Option<Vec<f64>>> {
        vec![Some(grad.to_vec())]
    }
}

fn transpose_last2(data: &[f64], batch: usize, rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; data.len()];
    for b in 0..batch {
        let src = &data[b * rows * cols..(b + 1) * rows * cols];
        let dst = &mut out[b * rows * cols..(b + 1) * rows * cols];
        for i in 0..rows {
            for j in 0..cols {
                dst[j * rows + i] = src[i * cols + j];
            }
        }
    }
    out
}

struct TransposeOp {
    batch: usize,
    rows: usize,
    cols: usize,
}
impl Backward for TransposeOp {
    fn backward(&self, _: &[Tensor], _: &[f64], grad: &[f64]) -> Vec<Option<Vec<f64>>> {
        vec![Some(transpose_last2(grad, self.batch, self.cols, self.rows))]
    }
}

struct ConcatOp {
    widths: Vec<usize>,
    outer: usize,
    inner: usize,
}
impl Backward for ConcatOp {
    fn backward(&self, inputs: &[Tensor], _: &[f64], grad: &[f64]) -> Vec<Option<Vec<f64>>> {
        let total: usize = self.widths.iter().sum();
        let mut start = 0;
        let mut out = Vec::with_capacity(inputs.len());
        for (t, &w) in inputs.iter().zip(&self.widths) {
            if t.requires_grad() {
                let mut g = Vec::with_capacity(self.outer * w * self.inner);
                for o in 0..self.outer {
                    let base = (o * total + start) * self.inner;
                    g.extend_from_slice(&grad[base..base + w * self.inner]);
                }
                out.push(Some(g));
            } else {
                out.push(None);
            }
            start += w;
        }
        out
    }
}

struct SliceOp {
    outer: usize,
    len: usize,
    inner: usize,
    range: Range<usize>,
}
impl Backward for SliceOp {
    fn backward(&self, _: &[Tensor], _: &[f64], grad: &[f64]) -> Vec<Option<Vec<f64>>> {
        let w = self.range.len();
        let mut g = vec![0.0; self.outer * self.len * self.inner];
        for o in 0..self.outer {
            let dst = (o * self.len + self.range.start) * self.inner;
            let src = o * w * self.inner;
            g[dst..dst + w * self.inner].copy_from_slice(&grad[src..src + w * self.inner]);
        }
        vec![Some(g)]
    }
}

impl Tensor {
    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor> {
        if shape.is_empty() || shape.contains(&0) || numel(shape) != self.numel() {
            return Err(TensorError::ShapeMismatch {
                op: "reshape",
                lhs: self.shape().to_vec(),
                rhs: shape.to_vec(),
            });
        }
        Ok(Tensor::from_op(
            shape.to_vec(),
            self.data().to_vec(),
            vec![self.clone()],
            ReshapeOp,
        ))
    }

    /// Swaps the last two axes.
    pub fn transpose(&self) -> Result<Tensor> {
        let r = self.rank();
        if r < 2 {
            return Err(TensorError::InvalidAxis {
                op: "transpose",
                axis: 1,
                rank: r,
            });
        }
        let (rows, cols) = (self.shape()[r - 2], self.shape()[r - 1]);
        let batch = self.numel() / (rows * cols);
        let mut shape = self.shape().to_vec();
        shape.swap(r - 2, r - 1);
        Ok(Tensor::from_op(
            shape,
            transpose_last2(self.data(), batch, rows, cols),
            vec![self.clone()],
            TransposeOp { batch, rows, cols },
        ))
    }

    /// Joins tensors along `axis`; all other extents must agree.
    pub fn concat(parts: &[Tensor], axis: usize) -> Result<Tensor> {
        let first = parts.first().ok_or(TensorError::Config(
            "concat of an empty list".to_string(),
        ))?;
        if axis >= first.rank() {
            return Err(TensorError::InvalidAxis {
                op: "concat",
                axis,
                rank: first.rank(),
            });
        }
        for p in &parts[1..] {
            let compatible = p.rank() == first.rank()
                && p
                    .shape()
                    .iter()
                    .zip(first.shape())
                    .enumerate()
                    .all(|(i, (a, b))| i == axis || a == b);
            if !compatible {
                return Err(TensorError::ShapeMismatch {
                    op: "concat",
                    lhs: first.shape().to_vec(),
                    rhs: p.shape().to_vec(),
                });
            }
        }
        let (outer, _, inner) = split_axis(first.shape(), axis);
        let widths: Vec<usize> = parts.iter().map(|p| p.shape()[axis]).collect();
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for (p, &w) in parts.iter().zip(&widths) {
                data.extend_from_slice(&p.data()[o * w * inner..(o + 1) * w * inner]);
            }
        }
        let mut shape = first.shape().to_vec();
        shape[axis] = total;
        Ok(Tensor::from_op(
            shape,
            data,
            parts.to_vec(),
            ConcatOp {
                widths,
                outer,
                inner,
            },
        ))
    }

    /// Sub-range `range` of `axis`.
    pub fn slice(&self, axis: usize, range: Range<usize>) -> Result<Tensor> {
        if axis >= self.rank() {
            return Err(TensorError::InvalidAxis {
                op: "slice",
                axis,
                rank: self.rank(),
            });
        }
        let (outer, len, inner) = split_axis(self.shape(), axis);
        if range.is_empty() || range.end > len {
            return Err(TensorError::Domain {
                op: "slice",
                msg: format!("range {range:?} invalid for axis length {len}"),
            });
        }
        let w = range.len();
        let mut data = Vec::with_capacity(outer * w * inner);
        for o in 0..outer {
            let base = (o * len + range.start) * inner;
            data.extend_from_slice(&self.data()[base..base + w * inner]);
        }
        let mut shape = self.shape().to_vec();
        shape[axis] = w;
        Ok(Tensor::from_op(
            shape,
            data,
            vec![self.clone()],
            SliceOp {
                outer,
                len,
                inner,
                range,
            },
        ))
    }
}
