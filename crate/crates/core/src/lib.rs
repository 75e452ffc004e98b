//! Higher-order stroboscopic averaging for `x' = Σ εⁱ Fᵢ(t, x)` with
//! `T`-periodic fields: Melnikov functions from an ε-graded jet flow,
//! averaged functions through the Bell-polynomial recursion, an executable
//! check of the identities linking them, and periodic orbits from simple
//! zeros of the first non-vanishing averaged function.

// Tolerance checks are written as `!(x <= tol)` so that NaN counts as a failure.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod averaging;
pub mod bell;
pub mod cli;
pub mod flow;
pub mod numeric;
pub mod report;
pub mod sysdsl;
pub mod tpsa;
