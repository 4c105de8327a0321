//! Minimal reverse-mode differentiation over dense 64-bit arrays.
//!
//! A [`Graph`] is a tape built eagerly by calling op methods; every op returns
//! a [`Var`] handle and fails on shape mismatch or a non-finite result.
//! [`Graph::backward`] fills gradients for inputs and parameter leaves.

mod checkpoint;
mod gemm;
mod gradcheck;
mod graph;
mod nn;
mod params;
mod tensor;

pub use checkpoint::{load_checkpoint, read_arrays, save_checkpoint, write_arrays, CheckpointHeader, Dtype, NamedArrays};
pub use gradcheck::grad_check;
pub use graph::{log_softmax, sigmoid, softmax, softplus, Graph, Var};
pub use nn::{ctc_forward_backward, logsumexp, smooth_l1_value, softmax_rows};
pub use params::{Adam, AdamConfig, Param, ParameterStore};
pub use tensor::{dims2, Tensor};

#[cfg(test)]
mod tests;
