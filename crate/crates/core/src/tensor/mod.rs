//! Dense `f64` tensors, a reverse-mode tape, and a finite-difference gradient checker.

mod dense;
mod gradcheck;
mod tape;

pub use dense::Tensor;
pub use gradcheck::{finite_diff_check, finite_diff_check_many, GradCheckReport};
pub use tape::{Gradients, NodeId, Tape};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("dimension mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("numeric domain error: {0}")]
    NumericDomain(String),
    #[error("contract violation: {0}")]
    Contract(String),
}

/// Stable `softmax(beta * v)` of a vector.
pub fn softmax_scaled(v: &Tensor, beta: f64) -> Result<Tensor, TensorError> {
    let mut tape = Tape::new();
    let x = tape.constant(v.clone());
    let y = tape.softmax(x, beta)?;
    Ok(tape.value(y).clone())
}

/// `beta^-1 log sum_i exp(beta * v_i)` of a non-empty vector.
pub fn logsumexp(v: &Tensor, beta: f64) -> Result<f64, TensorError> {
    let mut tape = Tape::new();
    let x = tape.constant(v.reshape(&[v.len()])?);
    let y = tape.logsumexp(x, beta)?;
    tape.value(y).item()
}
