//! Pointwise arithmetic, activations and full reductions.
//!
//! Broadcasting is limited to two cases: a bias vector added along the last
//! axis (`add_bias`) and a single-element tensor scaling another
//! (`scale_by`). Everything else requires identical shapes.

use crate::error::{Result, TensorError};
use crate::tensor::{Backward, Tensor};

fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(TensorError::ShapeMismatch {
            op,
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        });
    }
    Ok(())
}

fn zip_map(a: &[f64], b: &[f64], f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect()
}

struct AddOp;
impl Backward for AddOp {
    fn backward(&self, inputs: &[Tensor], _: &[f64], grad: &[f64]) -> Vec<Option<Vec<f64>>> {
        inputs
            .iter()
            .map(|t| t.requires_grad().then(|| grad.to_vec()))
            .collect()
    }
}

struct SubOp;
impl Backward for SubOp {
    fn backward(&self, inputs: &[Tensor], _: &[f64], grad: &[f64]) -> Vec<Option<Vec<f64>>> {
        vec![
            inputs[0].requires_grad().then(|| grad.to_vec()),
            inputs[1]
                .requires_grad()
                .then(|| grad.iter().map(|g| -g).collect()),
        ]
    }
}

struct MulOp;
impl Backward for MulOp {
    fn backward(&self, inputs: &[Tensor], _: &[f64], grad: &[f64]) -> Vec<Option<Vec<f64>>> {
        let (a, b) = (&inputs[0], &inputs[1]);
        vec![
            a.requires_grad().then(|| zip_map(grad, b.data(), |g, y| g * y)),
            b.requires_grad().then(|| zip_map(grad, a.data(), |g, x| g * x)),
        ]
    }
}

struct AddBiasOp {
    width: usize,
}
impl Backward for AddBiasOp {
    fn backward(&self, inputs: &[Tensor], _: &[f64], grad: &[f64]) -> Vec<Option<Vec<f64>>> {
        let bias_grad = inputs[1].requires_grad().then(|| {
            let mut acc = vec![0.0; self.width];
            for row in grad.chunks_exact(self.width) {
                acc.iter_mut().zip(row).for_each(|(a, g)| *a += g);
            }
            acc
        });
        vec![inputs[0].requires_grad().then(|| grad.to_vec()), bias_grad]
    }
}

struct ScaleOp(f64);
impl Backward for ScaleOp {
    fn backward(&self, _: &[Tensor], _: &[f64], grad: &[f64]) -> Vec<Option<Vec<f64>>> {
        vec![Some(grad.iter().map(|g| g * self.0).collect())]
    }
}

struct ScaleByOp;
impl Backward for ScaleByOp {
    fn backward(&self, inputs: &[Tensor], _: &[f64], grad: &[f64]) -> Vec<Option<Vec<f64>>> {
        let (x, alpha) = (&inputs[0], &inputs[1]);
        let a = alpha.data()[0];
        vec![
            x.requires_grad().then(|| grad.iter().map(|g| g * a).collect()),
            alpha
                .requires_grad()
                .then(|| vec![grad.iter().zip(x.data()).map(|(g, v)| g * v).sum()]),
        ]
    }
}

struct PassThrough;
impl Backward for PassThrough {
    fn backward(&self, _: &[Tensor], _: &[f64], grad: &[f64]) -> Vec<Option<Vec<f64>>> {
        vec![Some(grad.to_vec())]
    }
}

struct ExpOp;
impl Backward for ExpOp {
    fn backward(&self, _: &[Tensor], out: &[f64], grad: &[f64]) -> Vec<Option<Vec<f64>>> {
        vec![Some(zip_map(grad, out, |g, y| g * y))]
    }
}

struct LnOp;
impl Backward for LnOp {
    fn backward(&self, inputs: &[Tensor], _: &[f64], grad: &[f64]) -> Vec<Option<Vec<f64>>> {
        vec![Some(zip_map(grad, inputs[0].data(), |g, x| g / x))]
    }
}

struct ReluOp;
impl Backward for ReluOp {
    fn backward(&self, inputs: &[Tensor], _: &[f64], grad: &[f64]) -> Vec<Option<Vec<f64>>> {
        vec![Some(zip_map(grad, inputs[0].data(), |g, x| {
            if x > 0.0 {
                g
            } else {
                0.0
            }
        }))]
    }
}

struct AbsOp;
impl Backward for AbsOp {
    fn backward(&self, inputs: &[Tensor], _: &[f64], grad: &[f64]) -> Vec<Option<Vec<f64>>> {
        // subgradient 0 at the origin
        vec![Some(zip_map(grad, inputs[0].data(), |g, x| {
            if x > 0.0 {
                g
            } else if x < 0.0 {
                -g
            } else {
                0.0
            }
        }))]
    }
}

struct SumOp {
    factor: f64,
}
impl Backward for SumOp {
    fn backward(&self, inputs: &[Tensor], _: &[f64], grad: &[f64]) -> Vec<Option<Vec<f64>>> {
        vec![Some(vec![grad[0] * self.factor; inputs[0].numel()])]
    }
}

impl Tensor {
    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        same_shape("add", self, other)?;
        let data = zip_map(self.data(), other.data(), |a, b| a + b);
        Ok(Tensor::from_op(
            self.shape().to_vec(),
            data,
            vec![self.clone(), other.clone()],
            AddOp,
        ))
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        same_shape("sub", self, other)?;
        let data = zip_map(self.data(), other.data(), |a, b| a - b);
        Ok(Tensor::from_op(
            self.shape().to_vec(),
            data,
            vec![self.clone(), other.clone()],
            SubOp,
        ))
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        same_shape("mul", self, other)?;
        let data = zip_map(self.data(), other.data(), |a, b| a * b);
        Ok(Tensor::from_op(
            self.shape().to_vec(),
            data,
            vec![self.clone(), other.clone()],
            MulOp,
        ))
    }

    /// Adds a `[n]` vector to every row of a `[..., n]` tensor.
    pub fn add_bias(&self, bias: &Tensor) -> Result<Tensor> {
        let width = *self.shape().last().expect("rank >= 1");
        if bias.shape() != [width] {
            return Err(TensorError::ShapeMismatch {
                op: "add_bias",
                lhs: self.shape().to_vec(),
                rhs: bias.shape().to_vec(),
            });
        }
        let b = bias.data();
        let data = self
            .data()
            .chunks_exact(width)
            .flat_map(|row| row.iter().zip(b).map(|(x, y)| x + y))
            .collect();
        Ok(Tensor::from_op(
            self.shape().to_vec(),
            data,
            vec![self.clone(), bias.clone()],
            AddBiasOp { width },
        ))
    }

    /// Multiplication by a constant.
    pub fn scale(&self, factor: f64) -> Tensor {
        let data = self.data().iter().map(|x| x * factor).collect();
        Tensor::from_op(
            self.shape().to_vec(),
            data,
            vec![self.clone()],
            ScaleOp(factor),
        )
    }

    /// Multiplication by a single-element tensor, differentiable in both.
    pub fn scale_by(&self, alpha: &Tensor) -> Result<Tensor> {
        if alpha.numel() != 1 {
            return Err(TensorError::ShapeMismatch {
                op: "scale_by",
                lhs: self.shape().to_vec(),
                rhs: alpha.shape().to_vec(),
            });
        }
        let a = alpha.data()[0];
        let data = self.data().iter().map(|x| x * a).collect();
        Ok(Tensor::from_op(
            self.shape().to_vec(),
            data,
            vec![self.clone(), alpha.clone()],
            ScaleByOp,
        ))
    }

    /// Adds a constant array of the same shape; gradient passes through
    /// unchanged.
    pub fn add_constant(&self, values: &[f64]) -> Result<Tensor> {
        if values.len() != self.numel() {
            return Err(TensorError::ShapeMismatch {
                op: "add_constant",
                lhs: self.shape().to_vec(),
                rhs: vec![values.len()],
            });
        }
        let data = zip_map(self.data(), values, |a, b| a + b);
        Ok(Tensor::from_op(
            self.shape().to_vec(),
            data,
            vec![self.clone()],
            PassThrough,
        ))
    }

    pub fn exp(&self) -> Tensor {
        let data = self.data().iter().map(|x| x.exp()).collect();
        Tensor::from_op(self.shape().to_vec(), data, vec![self.clone()], ExpOp)
    }

    /// Natural logarithm; every value must be strictly positive.
    pub fn ln(&self) -> Result<Tensor> {
        if let Some(bad) = self.data().iter().find(|&&x| x.is_nan() || x <= 0.0) {
            return Err(TensorError::Domain {
                op: "ln",
                msg: format!("non-positive value {bad}"),
            });
        }
        let data = self.data().iter().map(|x| x.ln()).collect();
        Ok(Tensor::from_op(
            self.shape().to_vec(),
            data,
            vec![self.clone()],
            LnOp,
        ))
    }

    pub fn relu(&self) -> Tensor {
        let data = self.data().iter().map(|&x| x.max(0.0)).collect();
        Tensor::from_op(self.shape().to_vec(), data, vec![self.clone()], ReluOp)
    }

    /// Absolute value; the gradient at exactly zero is defined as zero.
    pub fn abs(&self) -> Tensor {
        let data = self.data().iter().map(|x| x.abs()).collect();
        Tensor::from_op(self.shape().to_vec(), data, vec![self.clone()], AbsOp)
    }

    /// Sum of all elements, shape `[1]`.
    pub fn sum(&self) -> Tensor {
        let total = self.data().iter().sum();
        Tensor::from_op(
            vec![1],
            vec![total],
            vec![self.clone()],
            SumOp { factor: 1.0 },
        )
    }

    /// Mean of all elements, shape `[1]`.
    pub fn mean(&self) -> Tensor {
        let n = self.numel() as f64;
        let total: f64 = self.data().iter().sum();
        Tensor::from_op(
            vec![1],
            vec![total / n],
            vec![self.clone()],
            SumOp { factor: 1.0 / n },
        )
    }
}
