//! Dense tensors and tape-based reverse-mode differentiation.

mod gradcheck;
mod tape;
#[allow(clippy::module_inception)]
mod tensor;

pub use gradcheck::{grad_check, grad_check_with};
pub use tape::{logsumexp, Gradients, Tape, Var, NORM_EPS};
pub use tensor::Tensor;

pub(crate) use tensor::gemm;

#[cfg(test)]
mod tests;
