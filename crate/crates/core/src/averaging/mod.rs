//! Melnikov ↔ averaged-function recursions, the executable check of the
//! identities between them, and periodic orbits from simple zeros of the
//! first non-vanishing averaged function.

pub mod orbit;
pub mod recursion;
pub mod verify;

use thiserror::Error;

use crate::bell::BellError;
use crate::flow::FlowError;
use crate::tpsa::SeriesError;

pub use orbit::{find_periodic_orbit, NewtonStep, OrbitConfig, OrbitReport, Validation};
pub use recursion::{
    averaged_from_jets, averaged_from_melnikov, averaged_from_melnikov_reduced, averaged_with_mode, compute_ytilde,
    melnikov_from_averaged, AveragedTable, RecursionMode,
};
pub use verify::{
    check_tables, verify_proposition, ClosureCheck, IdentityResidual, SampleResult, Tolerances, VerificationReport,
    VerifyConfig, Verdict,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AveragingError {
    #[error("level {level} needs derivatives up to arity {needed}, only {available} available")]
    InsufficientOrder { level: usize, needed: usize, available: usize },
    #[error("hypothesis index {ell} is outside the admissible range for order {order}")]
    InvalidEll { ell: usize, order: usize },
    #[error("level {level} needs earlier levels: {g_levels} averaged functions and {ytilde_levels} ỹ terms given")]
    MissingLevels { level: usize, g_levels: usize, ytilde_levels: usize },
    #[error("initial guess has {got} coordinates, system dimension is {dim}")]
    Dimension { got: usize, dim: usize },
    #[error("degenerate zero: Jacobian singular at iterate {iteration} (smallest singular value {sigma_min:e})")]
    DegenerateZero { iteration: usize, point: Vec<f64>, sigma_min: f64 },
    #[error("Newton iteration did not converge in {iterations} steps (final residual {:e})", trace.last().copied().unwrap_or(f64::NAN))]
    NoConvergence { iterations: usize, trace: Vec<f64> },
    #[error(transparent)]
    Series(#[from] SeriesError),
    #[error(transparent)]
    Bell(#[from] BellError),
    #[error(transparent)]
    Flow(#[from] FlowError),
}
