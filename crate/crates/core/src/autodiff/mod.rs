//! Minimal reverse-mode automatic differentiation over dense tensors.
//!
//! A [`Graph`] records primitive applications in execution order. Tensor
//! state maps onto it as follows: `value` lives in the node, `requires_grad`
//! is the leaf flag, and `grad` is readable through [`Graph::grad`] after
//! [`Graph::backward`].

mod gradcheck;
mod graph;
pub(crate) mod kernels;
mod tensor;

pub use gradcheck::{grad_check, grad_check_many, GradCheckReport, RESOLVABLE_GRADIENT};
pub use graph::monotonic_forward;
pub use graph::{Graph, Primitive, PrimitiveAttrs, Var};
pub use tensor::Tensor;

#[cfg(test)]
mod tests;
