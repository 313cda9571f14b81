//! Central finite-difference gradient checking.
//!
//! The numeric side only ever evaluates the forward pass (under [`no_grad`]),
//! so it is independent of every backward rule it checks.

use crate::error::{Result, TensorError};
use crate::tensor::{no_grad, Tensor};

/// Outcome of a gradient check, one entry per input tensor.
#[derive(Debug, Clone)]
pub struct GradCheck {
    pub analytic: Vec<Vec<f64>>,
    pub numeric: Vec<Vec<f64>>,
    /// `||analytic - numeric|| / max(||analytic||, ||numeric||)` per input,
    /// over the coordinates where the function is smooth.
    pub relative_errors: Vec<f64>,
    /// Coordinates whose one-sided differences disagree, i.e. where the
    /// step crosses a kink (ReLU, abs). Central differences are meaningless
    /// there, so they are left out of `relative_errors`.
    pub nonsmooth: Vec<Vec<usize>>,
}

impl GradCheck {
    pub fn max_relative_error(&self) -> f64 {
        self.relative_errors.iter().copied().fold(0.0, f64::max)
    }

    pub fn nonsmooth_count(&self) -> usize {
        self.nonsmooth.iter().map(Vec::len).sum()
    }

    pub fn coordinate_count(&self) -> usize {
        self.numeric.iter().map(Vec::len).sum()
    }
}

/// One-sided slopes that differ by more than this fraction of their size
/// mark a kink. On smooth functions the gap is `step * |f''|`, far below it.
pub const KINK_TOLERANCE: f64 = 1e-2;

fn is_kink(forward: f64, backward: f64) -> bool {
    (forward - backward).abs() > KINK_TOLERANCE * forward.abs().max(backward.abs()).max(1e-3)
}

fn norm(v: impl Iterator<Item = f64>) -> f64 {
    v.map(|x| x * x).sum::<f64>().sqrt()
}

/// Relative L2 distance between two gradient vectors. Two vectors that are
/// both numerically zero compare as equal.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff = norm(analytic.iter().zip(numeric).map(|(a, b)| a - b));
    let scale = norm(analytic.iter().copied()).max(norm(numeric.iter().copied()));
    if scale < 1e-12 {
        diff
    } else {
        diff / scale
    }
}

/// Compares the gradients of the scalar `f(inputs)` computed by
/// [`Tensor::backward`] with central differences of step `step`.
pub fn check_gradients<F>(f: F, inputs: &[Tensor], step: f64) -> Result<GradCheck>
where
    F: Fn(&[Tensor]) -> Result<Tensor>,
{
    let params: Vec<Tensor> = inputs
        .iter()
        .map(|t| Tensor::parameter(t.shape(), t.data().to_vec()))
        .collect::<Result<_>>()?;
    let loss = f(&params)?;
    if loss.numel() != 1 {
        return Err(TensorError::NotScalar(loss.shape().to_vec()));
    }
    loss.backward()?;
    let analytic: Vec<Vec<f64>> = params
        .iter()
        .map(|p| p.grad().unwrap_or_else(|| vec![0.0; p.numel()]))
        .collect();

    let mut numeric = Vec::with_capacity(inputs.len());
    let mut nonsmooth = Vec::with_capacity(inputs.len());
    no_grad(|| -> Result<()> {
        let mut consts: Vec<Tensor> = inputs.iter().map(Tensor::detach).collect();
        let centre = f(&consts)?.item()?;
        for (i, input) in inputs.iter().enumerate() {
            let mut g = vec![0.0; input.numel()];
            let mut kinks = Vec::new();
            let mut values = input.data().to_vec();
            for (j, gj) in g.iter_mut().enumerate() {
                let orig = values[j];
                values[j] = orig + step;
                consts[i] = Tensor::new(input.shape(), values.clone())?;
                let plus = f(&consts)?.item()?;
                values[j] = orig - step;
                consts[i] = Tensor::new(input.shape(), values.clone())?;
                let minus = f(&consts)?.item()?;
                values[j] = orig;
                *gj = (plus - minus) / (2.0 * step);
                if is_kink((plus - centre) / step, (centre - minus) / step) {
                    kinks.push(j);
                }
            }
            consts[i] = input.detach();
            numeric.push(g);
            nonsmooth.push(kinks);
        }
        Ok(())
    })?;

    let relative_errors = analytic
        .iter()
        .zip(&numeric)
        .zip(&nonsmooth)
        .map(|((a, n), skip)| {
            let keep = |v: &[f64]| -> Vec<f64> {
                v.iter().enumerate().filter(|(j, _)| !skip.contains(j)).map(|(_, x)| *x).collect()
            };
            relative_error(&keep(a), &keep(n))
        })
        .collect();
    Ok(GradCheck {
        analytic,
        numeric,
        relative_errors,
        nonsmooth,
    })
}
