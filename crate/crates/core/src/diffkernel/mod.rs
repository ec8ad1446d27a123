//! Minimal reverse-mode differentiation kernel: dense f64 tensors, the
//! operator set the model needs, and a single-sweep gradient tape.
//!
//! A [`Tape`] records forward ops; [`Tape::backward`] runs one reverse sweep
//! from a scalar loss and returns gradients for every grad-tracked node.
//! Tensors are immutable once an op has written them, so any number of
//! independent tapes can run in parallel.

mod tape;
mod tensor;

pub use tape::{finite_difference_grad, max_rel_error, Gradients, Tape, Var};
pub use tensor::Tensor;
