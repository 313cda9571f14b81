use crate::error::{Result, TensorError};
use crate::kernel::{gemm, MatMut, MatRef};
use crate::tensor::{Backward, Tensor};

struct MatmulOp {
    batch: usize,
    m: usize,
    k: usize,
    n: usize,
    shared_rhs: bool,
}

impl Backward for MatmulOp {
    fn backward(&self, inputs: &[Tensor], _: &[f64], grad: &[f64]) -> Vec<Option<Vec<f64>>> {
        let (a, b) = (&inputs[0], &inputs[1]);
        let (m, k, n) = (self.m, self.k, self.n);
        let b_off = |i: usize| if self.shared_rhs { 0 } else { i * k * n };

        let da = a.requires_grad().then(|| {
            // dA = dC * B^T
            let mut da = vec![0.0; a.numel()];
            for i in 0..self.batch {
                let dc = MatRef::row_major(grad, i * m * n, m, n);
                let bt = MatRef::row_major(b.data(), b_off(i), k, n).t();
                gemm(1.0, dc, bt, 0.0, MatMut::row_major(&mut da, i * m * k, m, k));
            }
            da
        });
        let db = b.requires_grad().then(|| {
            // dB = A^T * dC, summed over the batch when B is shared
            let mut db = vec![0.0; b.numel()];
            for i in 0..self.batch {
                let at = MatRef::row_major(a.data(), i * m * k, m, k).t();
                let dc = MatRef::row_major(grad, i * m * n, m, n);
                let beta = if self.shared_rhs && i > 0 { 1.0 } else { 0.0 };
                gemm(1.0, at, dc, beta, MatMut::row_major(&mut db, b_off(i), k, n));
            }
            db
        });
        vec![da, db]
    }
}

impl Tensor {
    /// Matrix product over the last two axes.
    ///
    /// `self` is `[..., m, k]`; `rhs` is either `[k, n]` (shared across the
    /// leading axes) or `[..., k, n]` with the same leading axes.
    pub fn matmul(&self, rhs: &Tensor) -> Result<Tensor> {
        let mismatch = || TensorError::ShapeMismatch {
            op: "matmul",
            lhs: self.shape().to_vec(),
            rhs: rhs.shape().to_vec(),
        };
        if self.rank() < 2 || rhs.rank() < 2 {
            return Err(mismatch());
        }
        let (sa, sb) = (self.shape(), rhs.shape());
        let (m, k) = (sa[sa.len() - 2], sa[sa.len() - 1]);
        let (k2, n) = (sb[sb.len() - 2], sb[sb.len() - 1]);
        if k != k2 {
            return Err(mismatch());
        }
        let lead = &sa[..sa.len() - 2];
        let shared_rhs = rhs.rank() == 2;
        if !shared_rhs && sb[..sb.len() - 2] != *lead {
            return Err(mismatch());
        }
        let batch: usize = lead.iter().product();
        let mut out = vec![0.0; batch * m * n];
        for i in 0..batch {
            let a = MatRef::row_major(self.data(), i * m * k, m, k);
            let b_off = if shared_rhs { 0 } else { i * k * n };
            let b = MatRef::row_major(rhs.data(), b_off, k, n);
            gemm(1.0, a, b, 0.0, MatMut::row_major(&mut out, i * m * n, m, n));
        }
        let mut shape = lead.to_vec();
        shape.extend([m, n]);
        Ok(Tensor::from_op(
            shape,
            out,
            vec![self.clone(), rhs.clone()],
            MatmulOp {
                batch,
                m,
                k,
                n,
                shared_rhs,
            },
        ))
    }
}
