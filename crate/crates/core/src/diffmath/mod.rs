//! Dense and sparse matrix kernels with reverse-mode differentiation.
//!
//! Everything is `f64`. A [`Tape`] is built eagerly during one forward pass
//! and dropped after [`Tape::backward`]; records are never reused across
//! optimisation steps.

mod csr;
mod gradcheck;
mod matrix;
mod tape;

pub use csr::CsrMatrix;
pub use gradcheck::grad_check;
pub use matrix::{sigmoid, Matrix};
pub use tape::{DiffValue, Gradients, NodeId, Tape};

/// Default negative slope for leaky-relu attention scores.
pub const LEAKY_RELU_SLOPE: f64 = 0.2;
