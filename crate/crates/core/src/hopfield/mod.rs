//! Continuous modern Hopfield networks: energy, update rule, retrieval,
//! separation, the retrieval-error bounds and the storage-capacity bound.

mod capacity;
mod lambert;
mod memory;

pub use capacity::{storage_capacity_bound, CapacityParams};
pub use lambert::lambert_w0;
pub use memory::{
    ball_point, is_stored, sphere_patterns, sphere_point, BoundTerms, PatternMemory,
    RetrievalResult, FIXED_POINT_MAX_ITER, FIXED_POINT_TOL,
};

use thiserror::Error;

use crate::tensor::TensorError;

#[derive(Debug, Error)]
pub enum HopfieldError {
    #[error("dimension mismatch: expected a vector of length {expected}, got shape {got:?}")]
    Dimension { expected: usize, got: Vec<usize> },
    #[error("separation is undefined for a memory with a single pattern")]
    UndefinedSeparation,
    #[error("capacity condition violated: c = {c} is below the threshold {threshold}")]
    CapacityCondition { c: f64, threshold: f64 },
    #[error("domain error: {0}")]
    Domain(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}
