//! Dense `f64` tensors with define-by-run reverse-mode differentiation.
//!
//! Every operation returns a new immutable [`Tensor`]; when any input
//! requires a gradient the operation is recorded so that
//! [`Tensor::backward`] can later push gradients back to the trainable
//! leaves. The graph is rebuilt on every forward pass.

mod error;
pub mod gradcheck;
mod kernel;
mod ops;
mod tensor;

pub use error::{Result, TensorError};
pub use ops::nn::{rotate_at, RotaryTable, MASK_VALUE, ROTARY_BASE};
pub use tensor::{is_grad_enabled, no_grad, Tensor};
