//! Numerical check of the identities `fᵢ = T gᵢ` for `ℓ ≤ i ≤ 2ℓ − 1` and
//! of the correction term at `2ℓ`, under `f₁ = … = f_{ℓ−1} = 0`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::recursion::{averaged_from_melnikov, AveragedTable};
use super::AveragingError;
use crate::flow::{integrate_displacement, FlowOptions, MelnikovTable};
use crate::sysdsl::SystemSpec;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Absolute bound on `max |fᵢ|`, `i < ℓ`.
    pub hypothesis: f64,
    /// Bound on `|fᵢ − T gᵢ| / (1 + |fᵢ|)`.
    pub identity: f64,
    /// Absolute bound on `|f₂ℓ − T g₂ℓ − (T²/2) dg_ℓ·g_ℓ|`.
    pub closure: f64,
    /// Bound on `|(f₂ℓ − ½ df_ℓ·f_ℓ)/T − g₂ℓ| / max(1, |g₂ℓ|)`.
    pub equivalence: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            hypothesis: 1e-8,
            identity: 1e-7,
            closure: 1e-6,
            equivalence: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerifyConfig {
    pub tolerances: Tolerances,
    pub flow: FlowOptions,
}

impl VerifyConfig {
    pub fn for_system(system: &SystemSpec) -> Self {
        VerifyConfig {
            tolerances: Tolerances::default(),
            flow: FlowOptions::for_system(system),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Pass,
    Fail,
    HypothesisFailed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityResidual {
    pub level: usize,
    /// `max_c |fᵢ − T gᵢ|`.
    pub absolute: f64,
    /// `absolute / (1 + max_c |fᵢ|)`; compared against the identity tolerance.
    pub relative: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum ClosureCheck {
    Checked {
        /// `|f₂ℓ − T g₂ℓ − (T²/2) dg_ℓ·g_ℓ|`.
        residual: f64,
        /// Agreement of `(f₂ℓ − ½ df_ℓ·f_ℓ)/T` with the recursion's `g₂ℓ`.
        equivalence: f64,
    },
    /// `2ℓ > k`: the table does not reach `f₂ℓ`.
    NotComputable { needed_order: usize, order: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleResult {
    pub point: Vec<f64>,
    pub f: Vec<Vec<f64>>,
    pub g: Vec<Vec<f64>>,
    pub hypothesis_f: f64,
    pub hypothesis_g: f64,
    pub identities: Vec<IdentityResidual>,
    pub closure: ClosureCheck,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub ell: usize,
    pub order: usize,
    pub period: f64,
    pub tolerances: Tolerances,
    /// Worst `max |fᵢ|`, `i < ℓ`, over all samples.
    pub hypothesis_residual: f64,
    /// Worst `max |gᵢ|`, `i < ℓ`.
    pub hypothesis_residual_g: f64,
    /// Worst case per level `ℓ..=min(2ℓ−1, k)`.
    pub identity_residuals: Vec<IdentityResidual>,
    pub closure: ClosureCheck,
    pub verdict: Verdict,
    pub samples: Vec<SampleResult>,
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Checks the identities on one pair of tables.
pub fn check_tables(f: &MelnikovTable, g: &AveragedTable, ell: usize) -> Result<SampleResult, AveragingError> {
    let k = f.order;
    let period = f.period;
    if ell < 2 || ell > k {
        return Err(AveragingError::InvalidEll { ell, order: k });
    }
    let hypothesis_f = (1..ell).map(|i| max_abs(f.f(i))).fold(0.0, f64::max);
    let hypothesis_g = (1..ell).map(|i| max_abs(g.g(i))).fold(0.0, f64::max);
    let identities = (ell..=(2 * ell - 1).min(k))
        .map(|i| {
            let diff: Vec<f64> = f.f(i).iter().zip(g.g(i)).map(|(a, b)| a - period * b).collect();
            let absolute = max_abs(&diff);
            IdentityResidual {
                level: i,
                absolute,
                relative: absolute / (1.0 + max_abs(f.f(i))),
            }
        })
        .collect();
    let closure = if 2 * ell <= k {
        let top = 2 * ell;
        let dg = g.deriv(ell, 1).apply(&[g.g(ell)])?;
        let df = f.deriv(ell, 1).apply(&[f.f(ell)])?;
        let mut residual: f64 = 0.0;
        let mut equivalence: f64 = 0.0;
        for c in 0..f.f(top).len() {
            let r = f.f(top)[c] - period * g.g(top)[c] - 0.5 * period * period * dg[c];
            residual = residual.max(r.abs());
            let closed = (f.f(top)[c] - 0.5 * df[c]) / period;
            let recursed = g.g(top)[c];
            equivalence = equivalence.max((closed - recursed).abs() / recursed.abs().max(1.0));
        }
        ClosureCheck::Checked { residual, equivalence }
    } else {
        ClosureCheck::NotComputable {
            needed_order: 2 * ell,
            order: k,
        }
    };
    Ok(SampleResult {
        point: f.base_point.clone(),
        f: f.values(),
        g: g.values(),
        hypothesis_f,
        hypothesis_g,
        identities,
        closure,
    })
}

/// Integrates and runs the recursion at every sample point, then aggregates
/// worst-case residuals into a verdict.
pub fn verify_proposition(
    system: &SystemSpec,
    ell: usize,
    points: &[Vec<f64>],
    config: &VerifyConfig,
) -> Result<VerificationReport, AveragingError> {
    let k = config.flow.eps_order;
    if ell < 2 || ell > k {
        return Err(AveragingError::InvalidEll { ell, order: k });
    }
    let samples = points
        .par_iter()
        .map(|z| {
            let f = integrate_displacement(system, z, config.flow)?;
            let g = averaged_from_melnikov(&f)?;
            check_tables(&f, &g, ell)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(aggregate(ell, k, system.period, config.tolerances, samples))
}

fn aggregate(ell: usize, k: usize, period: f64, tol: Tolerances, samples: Vec<SampleResult>) -> VerificationReport {
    let hypothesis_residual = samples.iter().map(|s| s.hypothesis_f).fold(0.0, f64::max);
    let hypothesis_residual_g = samples.iter().map(|s| s.hypothesis_g).fold(0.0, f64::max);
    let identity_residuals: Vec<IdentityResidual> = (ell..=(2 * ell - 1).min(k))
        .map(|level| {
            let pick = |f: fn(&IdentityResidual) -> f64| {
                samples
                    .iter()
                    .flat_map(|s| s.identities.iter().filter(|r| r.level == level).map(f))
                    .fold(0.0, f64::max)
            };
            IdentityResidual {
                level,
                absolute: pick(|r| r.absolute),
                relative: pick(|r| r.relative),
            }
        })
        .collect();
    let closure = if 2 * ell <= k {
        let mut residual: f64 = 0.0;
        let mut equivalence: f64 = 0.0;
        for s in &samples {
            if let ClosureCheck::Checked { residual: r, equivalence: e } = s.closure {
                residual = residual.max(r);
                equivalence = equivalence.max(e);
            }
        }
        ClosureCheck::Checked { residual, equivalence }
    } else {
        ClosureCheck::NotComputable {
            needed_order: 2 * ell,
            order: k,
        }
    };
    let identities_ok = identity_residuals.iter().all(|r| r.relative <= tol.identity);
    let closure_ok = match closure {
        ClosureCheck::Checked { residual, equivalence } => residual <= tol.closure && equivalence <= tol.equivalence,
        ClosureCheck::NotComputable { .. } => true,
    };
    let verdict = if !(hypothesis_residual <= tol.hypothesis) {
        Verdict::HypothesisFailed
    } else if identities_ok && closure_ok {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    VerificationReport {
        ell,
        order: k,
        period,
        tolerances: tol,
        hypothesis_residual,
        hypothesis_residual_g,
        identity_residuals,
        closure,
        verdict,
        samples,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick(system: &SystemSpec) -> VerifyConfig {
        let mut c = VerifyConfig::for_system(system);
        c.flow.steps = 400;
        c
    }

    #[test]
    fn zero_system_passes_with_zero_residuals() {
        let s = SystemSpec::from_sources("zero", 2, "1", 4, &[]).unwrap();
        let r = verify_proposition(&s, 2, &[vec![0.1, 0.2]], &quick(&s)).unwrap();
        assert_eq!(r.verdict, Verdict::Pass);
        assert_eq!(r.hypothesis_residual, 0.0);
        assert!(r.identity_residuals.iter().all(|x| x.absolute == 0.0));
        assert_eq!(r.closure, ClosureCheck::Checked { residual: 0.0, equivalence: 0.0 });
    }

    #[test]
    fn nonvanishing_first_order_fails_hypothesis() {
        let s = SystemSpec::from_sources("lin", 1, "2*pi", 2, &[(1, &["x1"])]).unwrap();
        let z = 0.8;
        let r = verify_proposition(&s, 2, &[vec![z]], &quick(&s)).unwrap();
        assert_eq!(r.verdict, Verdict::HypothesisFailed);
        assert!((r.hypothesis_residual - s.period * z).abs() < 1e-10);
    }

    #[test]
    fn closure_reported_as_not_computable() {
        let s = SystemSpec::from_sources("c", 1, "2*pi", 3, &[(1, &["cos(t)*x1"]), (2, &["x1"])]).unwrap();
        let r = verify_proposition(&s, 2, &[vec![1.0]], &quick(&s)).unwrap();
        assert_eq!(r.closure, ClosureCheck::NotComputable { needed_order: 4, order: 3 });
        assert_eq!(r.verdict, Verdict::Pass);
        assert_eq!(r.identity_residuals.len(), 2);
    }

    #[test]
    fn ell_out_of_range() {
        let s = SystemSpec::from_sources("c", 1, "1", 3, &[]).unwrap();
        assert!(matches!(
            verify_proposition(&s, 4, &[vec![0.0]], &quick(&s)),
            Err(AveragingError::InvalidEll { ell: 4, order: 3 })
        ));
        assert!(verify_proposition(&s, 1, &[vec![0.0]], &quick(&s)).is_err());
    }

    #[test]
    fn empty_sample_list() {
        let s = SystemSpec::from_sources("c", 1, "1", 2, &[]).unwrap();
        let r = verify_proposition(&s, 2, &[], &quick(&s)).unwrap();
        assert!(r.samples.is_empty());
        assert_eq!(r.verdict, Verdict::Pass);
    }
}
