//! Dense f64 tensor arithmetic with reverse-mode differentiation.
//!
//! The whole pipeline trains on this substrate: tensors are immutable
//! values, a [`Tape`] records the computation graph, and [`Tape::backward`]
//! walks it in reverse to accumulate gradients. Everything runs in 64-bit
//! floats; any NaN/Inf produced by an op is a hard error rather than a
//! value that propagates.

mod gradcheck;
mod ops;
pub mod optim;
mod tape;
mod tensor;

pub use gradcheck::{finite_diff_gradient, max_rel_err};
pub use ops::OpKind;
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NumericsError {
    #[error("shape mismatch in {op}: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },
    #[error("domain error in {op}: {detail}")]
    Domain { op: &'static str, detail: String },
    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },
    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("{0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, NumericsError>;
