//! Continuous modern Hopfield networks and the Hopular architecture for
//! tabular data.
//!
//! * [`tensor`]: dense `f64` tensors with reverse-mode differentiation.
//! * [`hopfield`]: energy, update rule, retrieval and capacity theory.
//! * [`model`]: embedding layer, Hopular blocks and summarization layer.
//! * [`training`]: masking, the mixed feature/target objective, LAMB and
//!   slow-weight averaging, early stopping.
//! * [`data`]: schema, CSV ingestion, encoding and splits.
//! * [`harness`]: run configuration, metrics, baselines, oracles and CLI.

pub mod data;
pub mod harness;
pub mod hopfield;
pub mod model;
pub mod tensor;
pub mod training;
