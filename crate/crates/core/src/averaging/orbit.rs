//! Periodic orbits from simple zeros of the first non-vanishing averaged
//! function `g_ℓ`, with optional confirmation on the full time-`T` map.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::recursion::{averaged_from_melnikov, AveragedTable};
use super::AveragingError;
use crate::flow::{flow_map, integrate_displacement, FlowOptions, DEFAULT_STEPS};
use crate::sysdsl::SystemSpec;
use crate::tpsa::{extract_multilinear, SeriesVector};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrbitConfig {
    pub steps: usize,
    pub max_iterations: usize,
    /// Convergence threshold on `max |g_ℓ|`.
    pub tolerance: f64,
    /// A Jacobian with `σ_min ≤ singular_tolerance · max(σ_max, 1)` is singular.
    pub singular_tolerance: f64,
    /// Solve the full system at this `ε` once a zero is found.
    pub validate_eps: Option<f64>,
}

impl Default for OrbitConfig {
    fn default() -> Self {
        OrbitConfig {
            steps: DEFAULT_STEPS,
            max_iterations: 50,
            tolerance: 1e-10,
            singular_tolerance: 1e-12,
            validate_eps: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewtonStep {
    pub point: Vec<f64>,
    /// `max |g_ℓ|` at `point`.
    pub residual: f64,
    /// Number of halvings applied to the step that led here.
    pub halvings: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Validation {
    pub eps: f64,
    /// Initial condition after Newton correction on `x ↦ x(T) − x`.
    pub initial_condition: Vec<f64>,
    /// `max |x(T) − x(0)|` from the uncorrected zero `z*`.
    pub residual_at_zero: f64,
    /// `max |x(T) − x(0)|` from the corrected initial condition.
    pub periodicity_residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrbitReport {
    pub ell: usize,
    pub zero: Vec<f64>,
    /// `g_ℓ(z*)`.
    pub residual: Vec<f64>,
    /// `dg_ℓ(z*)` as rows of output components.
    pub jacobian: Vec<Vec<f64>>,
    pub singular_values: Vec<f64>,
    /// `max |gᵢ(z*)|`, `i < ℓ`; should be negligible for the zero to be meaningful.
    pub lower_order_residual: f64,
    pub iterations: Vec<NewtonStep>,
    pub validation: Option<Validation>,
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Averaged functions through level `ℓ` with `dg_ℓ` available.
fn averaged_at(system: &SystemSpec, ell: usize, z: &[f64], steps: usize) -> Result<AveragedTable, AveragingError> {
    let options = FlowOptions {
        eps_order: ell,
        spatial_order: ell,
        steps,
    };
    let f = integrate_displacement(system, z, options)?;
    averaged_from_melnikov(&f)
}

fn to_matrix(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let n = rows.len();
    DMatrix::from_fn(n, n, |r, c| rows[r][c])
}

/// Solves `J δ = −r`, or returns `None` with `σ_min` when `J` is singular.
fn newton_direction(jac: &DMatrix<f64>, residual: &[f64], singular_tolerance: f64) -> (Option<Vec<f64>>, Vec<f64>) {
    let svd = jac.clone().svd(true, true);
    let sigma: Vec<f64> = svd.singular_values.iter().copied().collect();
    let s_max = sigma.iter().copied().fold(0.0, f64::max);
    let s_min = sigma.iter().copied().fold(f64::INFINITY, f64::min);
    if !(s_min > singular_tolerance * s_max.max(1.0)) {
        return (None, sigma);
    }
    let rhs = -DVector::from_column_slice(residual);
    let delta = svd.solve(&rhs, 0.0).expect("U and Vᵀ were requested");
    (Some(delta.iter().copied().collect()), sigma)
}

/// Safeguarded Newton on `z ↦ g_ℓ(z)` with the recursion's `dg_ℓ` as
/// Jacobian, then optional validation on the full system.
pub fn find_periodic_orbit(
    system: &SystemSpec,
    ell: usize,
    initial_guess: &[f64],
    config: &OrbitConfig,
) -> Result<OrbitReport, AveragingError> {
    if ell == 0 || ell > system.order {
        return Err(AveragingError::InvalidEll { ell, order: system.order });
    }
    if initial_guess.len() != system.dim {
        return Err(AveragingError::Dimension {
            got: initial_guess.len(),
            dim: system.dim,
        });
    }
    let mut z = initial_guess.to_vec();
    let mut table = averaged_at(system, ell, &z, config.steps)?;
    let mut residual = max_abs(table.g(ell));
    let mut iterations = vec![NewtonStep {
        point: z.clone(),
        residual,
        halvings: 0,
    }];
    let mut iteration = 0;
    loop {
        let jac = to_matrix(&table.deriv(ell, 1).as_matrix());
        let (direction, sigma) = newton_direction(&jac, table.g(ell), config.singular_tolerance);
        let Some(direction) = direction else {
            return Err(AveragingError::DegenerateZero {
                iteration,
                point: z,
                sigma_min: sigma.iter().copied().fold(f64::INFINITY, f64::min),
            });
        };
        if residual <= config.tolerance {
            let validation = match config.validate_eps {
                Some(eps) => Some(validate(system, eps, &z, config)?),
                None => None,
            };
            let lower_order_residual = (1..ell).map(|i| max_abs(table.g(i))).fold(0.0, f64::max);
            return Ok(OrbitReport {
                ell,
                zero: z,
                residual: table.g(ell).to_vec(),
                jacobian: table.deriv(ell, 1).as_matrix(),
                singular_values: sigma,
                lower_order_residual,
                iterations,
                validation,
            });
        }
        if iteration == config.max_iterations {
            return Err(AveragingError::NoConvergence {
                iterations: iteration,
                trace: iterations.iter().map(|s| s.residual).collect(),
            });
        }
        iteration += 1;
        // halve the step while the residual grows; accept the last trial
        let mut scale = 1.0;
        let mut halvings = 0;
        loop {
            let trial: Vec<f64> = z.iter().zip(&direction).map(|(a, d)| a + scale * d).collect();
            let trial_table = averaged_at(system, ell, &trial, config.steps);
            let accept_anyway = halvings >= 30;
            match trial_table {
                Ok(t) => {
                    let r = max_abs(t.g(ell));
                    if r <= residual || accept_anyway {
                        z = trial;
                        table = t;
                        residual = r;
                        break;
                    }
                }
                Err(e) if accept_anyway => return Err(e),
                // a blown-up trial step counts as a residual increase
                Err(_) => {}
            }
            scale *= 0.5;
            halvings += 1;
        }
        iterations.push(NewtonStep {
            point: z.clone(),
            residual,
            halvings,
        });
    }
}

/// Newton on `x ↦ x(T; x, ε) − x` starting at `z*`, with the Jacobian from
/// a first-order series flow.
fn validate(system: &SystemSpec, eps: f64, zero: &[f64], config: &OrbitConfig) -> Result<Validation, AveragingError> {
    let n = system.dim;
    let displacement = |x: &[f64]| -> Result<(Vec<f64>, DMatrix<f64>), AveragingError> {
        let seeded = SeriesVector::identity_at(x, 1).0;
        let end = flow_map(system, eps, seeded, config.steps)?;
        let value: Vec<f64> = end.iter().zip(x).map(|(c, x0)| c.constant_term() - x0).collect();
        let d = extract_multilinear(&end, 1)?.as_matrix();
        let jac = DMatrix::from_fn(n, n, |r, c| d[r][c] - if r == c { 1.0 } else { 0.0 });
        Ok((value, jac))
    };
    let mut x = zero.to_vec();
    let (mut value, mut jac) = displacement(&x)?;
    let residual_at_zero = max_abs(&value);
    let mut best = (x.clone(), residual_at_zero);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < config.max_iterations {
        if max_abs(&value) <= 1e-13 {
            converged = true;
            break;
        }
        let (Some(delta), _) = newton_direction(&jac, &value, config.singular_tolerance) else {
            break;
        };
        iterations += 1;
        let step_size = max_abs(&delta);
        x.iter_mut().zip(&delta).for_each(|(a, d)| *a += d);
        (value, jac) = displacement(&x)?;
        let r = max_abs(&value);
        if r < best.1 {
            best = (x.clone(), r);
        }
        // the residual stalls at integration round-off: stop once steps do
        if step_size <= 1e-14 * (1.0 + max_abs(&x)) {
            converged = true;
            break;
        }
    }
    Ok(Validation {
        eps,
        initial_condition: best.0,
        residual_at_zero,
        periodicity_residual: best.1,
        iterations,
        converged,
    })
}
