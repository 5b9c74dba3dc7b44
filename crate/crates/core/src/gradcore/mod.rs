//! Dense tensors with reverse-mode automatic differentiation.
//!
//! All arithmetic in the crate runs in `f64` through a [`Tape`]. Model code
//! binds parameters as trainable leaves, builds the loss from primitives,
//! and calls [`Tape::backward`] once per step.

mod gradcheck;
mod tape;
mod tensor;

pub use gradcheck::{grad_check, grad_check_many, GradCheckReport};
pub use tape::{log_softmax_rows, sigmoid, softmax_rows, Tape, Var};
pub use tensor::Tensor;
