//! Robust decomposition of orthogonal 4-tensors under spectral-norm noise,
//! and orthonormal dictionary learning from fourth moments.
//!
//! The pipeline turns a spectral-norm error bound into a Frobenius-norm one
//! by eigenvalue truncation, caps the rectangular unfoldings at unit spectral
//! norm, and then extracts components with random contractions followed by a
//! power-iteration style refinement against the original tensor.

// `!(x > 0.0)` is used on purpose: it also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod decompose;
pub mod dense;
pub mod dictlearn;
pub mod error;
pub mod harness;
pub mod matrix;
pub mod rng;
pub mod spectral;
pub mod tensor;

#[cfg(test)]
#[path = "../tests/support/oracle.rs"]
pub(crate) mod oracle;

pub use decompose::{
    full_decompose, ComponentSet, Decomposition, DecompositionReport, RecoveryParams,
};
pub use error::{Error, Result};
pub use matrix::{LinearOperator, LowRankPsd, MatrixView};
pub use spectral::{
    clip_singular, psd_truncate, spectral_norm, subspace_power_iter, Representation,
    SpectralDecomp,
};
pub use tensor::{ReshapePlan, Tensor4};
