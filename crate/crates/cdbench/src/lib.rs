//! Numerical test bench for the Bakry–Émery curvature-dimension inequalities.
//!
//! The pipeline is: [`model_space`] builds a discretised geometry,
//! [`generator`] assembles L = Δ + ∇V·∇ with its Γ-calculus,
//! [`semigroup`] diagonalises −L to evaluate P_t and heat kernels,
//! [`transport`] provides exact Wasserstein distances, [`inequalities`]
//! turns each inequality into a signed margin, and [`harness`] runs whole
//! scenarios and writes reports.

// `!(x > 0.0)` is used on purpose throughout: unlike `x <= 0.0` it also
// rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod generator;
pub mod harness;
pub mod inequalities;
pub mod linalg;
pub mod model_space;
pub mod semigroup;
pub mod transport;

pub use error::{BenchError, Result};
