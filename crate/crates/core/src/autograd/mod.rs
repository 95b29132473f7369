//! Reverse-mode automatic differentiation over dense `f64` tensors, plus the
//! Adam optimizer.

mod ops;
mod optim;
mod tensor;

pub use ops::*;
pub use optim::{AdamConfig, AdamState, Parameter};
pub use tensor::{no_grad, NoGradGuard, Tensor};
