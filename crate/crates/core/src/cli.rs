//! Command-line surface: argument parsing, resolution into a [`RunConfig`],
//! execution and the exit-code contract (0 pass, 1 verdict failure, 2 error).

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::averaging::{
    averaged_from_melnikov, find_periodic_orbit, verify_proposition, AveragingError, OrbitConfig, OrbitReport,
    Tolerances, VerificationReport, VerifyConfig, Verdict,
};
use crate::bell::{enumerate_partitions, BellError, PartitionTerm};
use crate::flow::{integrate_displacement, FlowOptions, DEFAULT_STEPS};
use crate::report::{to_json_string, Report, ReportError};
use crate::sysdsl::{check_periodicity, parse_system, PeriodicityReport, SystemError, SystemSpec};

/// Sample count and tolerance of the `Fᵢ(0, x) = Fᵢ(T, x)` screen.
const PERIODICITY_SAMPLES: usize = 32;
const PERIODICITY_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Parser)]
#[command(name = "strobo", version, about = "Higher-order stroboscopic averaging toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Melnikov functions fᵢ(z) and averaged functions gᵢ(z), i = 1..k, at each sample.
    Table {
        system: PathBuf,
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        sampling: SamplingArgs,
    },
    /// Check fᵢ = T gᵢ for ℓ ≤ i ≤ 2ℓ−1 and the 2ℓ correction under f₁ = … = f_{ℓ−1} = 0.
    Verify {
        system: PathBuf,
        #[arg(long)]
        ell: usize,
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        sampling: SamplingArgs,
        #[arg(long, default_value_t = Tolerances::default().hypothesis)]
        tol_hypothesis: f64,
        #[arg(long, default_value_t = Tolerances::default().identity)]
        tol_identity: f64,
        #[arg(long, default_value_t = Tolerances::default().closure)]
        tol_closure: f64,
        #[arg(long, default_value_t = Tolerances::default().equivalence)]
        tol_equivalence: f64,
    },
    /// Newton search for a simple zero of g_ℓ, optionally confirmed on the full system.
    FindOrbit {
        system: PathBuf,
        #[arg(long, default_value_t = 1)]
        ell: usize,
        /// Comma-separated initial guess.
        #[arg(long, required = true, allow_hyphen_values = true, value_parser = parse_vector)]
        guess: ::std::vec::Vec<f64>,
        /// Solve the full system at this ε from the corrected initial condition.
        #[arg(long)]
        validate_eps: Option<f64>,
        #[arg(long, default_value_t = DEFAULT_STEPS)]
        steps: usize,
        #[arg(long, default_value_t = 50)]
        max_iterations: usize,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the terms of the partial Bell polynomial B_{J,M}.
    BellDebug {
        j: usize,
        m: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Highest ε-power k (defaults to the system file's order).
    #[arg(long)]
    pub order: Option<usize>,
    /// Truncation order of the δz series (defaults to k − 1).
    #[arg(long)]
    pub spatial_order: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_STEPS)]
    pub steps: usize,
    /// Report path; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SamplingArgs {
    /// Explicit sample point, comma-separated; repeatable. Overrides random sampling.
    #[arg(long = "point", allow_hyphen_values = true, value_parser = parse_vector)]
    pub points: Vec<Vec<f64>>,
    /// Number of random samples drawn from the box.
    #[arg(long, default_value_t = 4)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// `lo:hi` for every coordinate, or one `lo:hi` per coordinate separated by commas.
    #[arg(long = "box", allow_hyphen_values = true, default_value = "-1:1")]
    pub sample_box: String,
}

fn parse_vector(s: &str) -> Result<Vec<f64>, String> {
    s.split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("bad number {p:?}: {e}")))
        .collect()
}

fn parse_box(s: &str, dim: usize) -> Result<Vec<(f64, f64)>, CliError> {
    let bad = |why: &str| CliError::Usage(format!("bad --box {s:?}: {why}"));
    let ranges = s
        .split(',')
        .map(|part| {
            let (lo, hi) = part.split_once(':').ok_or_else(|| bad("expected lo:hi"))?;
            let lo: f64 = lo.trim().parse().map_err(|_| bad("lower bound is not a number"))?;
            let hi: f64 = hi.trim().parse().map_err(|_| bad("upper bound is not a number"))?;
            if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(bad("need finite lo ≤ hi"));
            }
            Ok((lo, hi))
        })
        .collect::<Result<Vec<_>, _>>()?;
    match ranges.len() {
        1 => Ok(vec![ranges[0]; dim]),
        n if n == dim => Ok(ranges),
        n => Err(bad(&format!("{n} ranges for dimension {dim}"))),
    }
}

/// How sample points are chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Sampling {
    Explicit { points: Vec<Vec<f64>> },
    Random { count: usize, seed: u64, bounds: Vec<(f64, f64)> },
}

impl Sampling {
    /// The points, fully determined by the variant's data.
    pub fn points(&self) -> Vec<Vec<f64>> {
        match self {
            Sampling::Explicit { points } => points.clone(),
            Sampling::Random { count, seed, bounds } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                (0..*count)
                    .map(|_| {
                        bounds
                            .iter()
                            .map(|&(lo, hi)| if lo == hi { lo } else { rng.gen_range(lo..hi) })
                            .collect()
                    })
                    .collect()
            }
        }
    }
}

/// Fully resolved run; echoed verbatim into every report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum RunConfig {
    Table {
        system_path: PathBuf,
        flow: FlowOptions,
        sampling: Sampling,
        out: Option<PathBuf>,
    },
    Verify {
        system_path: PathBuf,
        ell: usize,
        flow: FlowOptions,
        tolerances: Tolerances,
        sampling: Sampling,
        out: Option<PathBuf>,
    },
    FindOrbit {
        system_path: PathBuf,
        ell: usize,
        guess: Vec<f64>,
        orbit: OrbitConfig,
        out: Option<PathBuf>,
    },
    BellDebug {
        j: usize,
        m: usize,
        out: Option<PathBuf>,
    },
}

impl RunConfig {
    fn name(&self) -> &'static str {
        match self {
            RunConfig::Table { .. } => "table",
            RunConfig::Verify { .. } => "verify",
            RunConfig::FindOrbit { .. } => "find-orbit",
            RunConfig::BellDebug { .. } => "bell-debug",
        }
    }

    fn out(&self) -> Option<&Path> {
        match self {
            RunConfig::Table { out, .. }
            | RunConfig::Verify { out, .. }
            | RunConfig::FindOrbit { out, .. }
            | RunConfig::BellDebug { out, .. } => out.as_deref(),
        }
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("cannot read system file {path}: {source}")]
    ReadSystem { path: String, source: std::io::Error },
    #[error("{path}: {source}")]
    System { path: String, source: SystemError },
    #[error("{path}: field is not {period}-periodic: {violations} violation(s), first at F{level} component {component}")]
    NotPeriodic {
        path: String,
        period: f64,
        violations: usize,
        level: usize,
        component: usize,
    },
    #[error(transparent)]
    Averaging(#[from] AveragingError),
    #[error(transparent)]
    Flow(#[from] crate::flow::FlowError),
    #[error(transparent)]
    Bell(#[from] BellError),
    #[error(transparent)]
    Report(#[from] ReportError),
}

impl CliError {
    /// Every error maps to exit status 2.
    pub fn exit_code(&self) -> i32 {
        2
    }
}

/// Result of a run: exit status, the JSON document and any human-readable
/// lines for standard output.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub exit_code: i32,
    pub report: String,
    pub text: Vec<String>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableSample {
    pub point: Vec<f64>,
    pub f: Vec<Vec<f64>>,
    pub g: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableResult {
    pub order: usize,
    pub period: f64,
    pub periodicity: PeriodicityReport,
    pub samples: Vec<TableSample>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyResult {
    pub periodicity: PeriodicityReport,
    pub verification: VerificationReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum OrbitResult {
    Found(OrbitReport),
    DegenerateZero { iteration: usize, point: Vec<f64>, sigma_min: f64 },
    NoConvergence { iterations: usize, trace: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BellResult {
    pub j: usize,
    pub m: usize,
    pub terms: Vec<PartitionTerm>,
}

/// Turns parsed arguments into a [`RunConfig`]; reads the system file when
/// its dimension is needed to resolve the sample box.
pub fn resolve(cli: Cli) -> Result<RunConfig, CliError> {
    match cli.command {
        Command::Table { system, common, sampling } => {
            let spec = load_system(&system, common.order)?;
            Ok(RunConfig::Table {
                flow: flow_options(&spec, &common)?,
                sampling: resolve_sampling(&sampling, spec.dim)?,
                system_path: system,
                out: common.out,
            })
        }
        Command::Verify {
            system,
            ell,
            common,
            sampling,
            tol_hypothesis,
            tol_identity,
            tol_closure,
            tol_equivalence,
        } => {
            let spec = load_system(&system, common.order)?;
            if ell < 2 || ell > spec.order {
                return Err(CliError::Usage(format!(
                    "--ell must satisfy 2 ≤ ℓ ≤ k = {}, got {ell}",
                    spec.order
                )));
            }
            Ok(RunConfig::Verify {
                ell,
                flow: flow_options(&spec, &common)?,
                tolerances: Tolerances {
                    hypothesis: tol_hypothesis,
                    identity: tol_identity,
                    closure: tol_closure,
                    equivalence: tol_equivalence,
                },
                sampling: resolve_sampling(&sampling, spec.dim)?,
                system_path: system,
                out: common.out,
            })
        }
        Command::FindOrbit {
            system,
            ell,
            guess,
            validate_eps,
            steps,
            max_iterations,
            tol,
            out,
        } => {
            let spec = load_system(&system, None)?;
            if ell == 0 || ell > spec.order {
                return Err(CliError::Usage(format!(
                    "--ell must satisfy 1 ≤ ℓ ≤ k = {}, got {ell}",
                    spec.order
                )));
            }
            if guess.len() != spec.dim {
                return Err(CliError::Usage(format!(
                    "--guess has {} coordinates, system dimension is {}",
                    guess.len(),
                    spec.dim
                )));
            }
            if steps == 0 {
                return Err(CliError::Usage("--steps must be at least 1".into()));
            }
            Ok(RunConfig::FindOrbit {
                system_path: system,
                ell,
                guess,
                orbit: OrbitConfig {
                    steps,
                    max_iterations,
                    tolerance: tol,
                    validate_eps,
                    ..OrbitConfig::default()
                },
                out,
            })
        }
        Command::BellDebug { j, m, out } => Ok(RunConfig::BellDebug { j, m, out }),
    }
}

fn flow_options(spec: &SystemSpec, common: &CommonArgs) -> Result<FlowOptions, CliError> {
    let k = spec.order;
    let d = common.spatial_order.unwrap_or(k.saturating_sub(1));
    if d + 1 < k {
        return Err(CliError::Usage(format!("--spatial-order must be at least k − 1 = {}", k - 1)));
    }
    if common.steps == 0 {
        return Err(CliError::Usage("--steps must be at least 1".into()));
    }
    Ok(FlowOptions {
        eps_order: k,
        spatial_order: d,
        steps: common.steps,
    })
}

fn resolve_sampling(args: &SamplingArgs, dim: usize) -> Result<Sampling, CliError> {
    if !args.points.is_empty() {
        if let Some(p) = args.points.iter().find(|p| p.len() != dim) {
            return Err(CliError::Usage(format!(
                "--point has {} coordinates, system dimension is {dim}",
                p.len()
            )));
        }
        return Ok(Sampling::Explicit {
            points: args.points.clone(),
        });
    }
    Ok(Sampling::Random {
        count: args.samples,
        seed: args.seed,
        bounds: parse_box(&args.sample_box, dim)?,
    })
}

fn load_system(path: &Path, order: Option<usize>) -> Result<SystemSpec, CliError> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::ReadSystem {
        path: path.display().to_string(),
        source,
    })?;
    let spec = parse_system(&text).map_err(|source| CliError::System {
        path: path.display().to_string(),
        source,
    })?;
    match order {
        Some(0) => Err(CliError::Usage("--order must be at least 1".into())),
        Some(k) => Ok(spec.with_order(k)),
        None => Ok(spec),
    }
}

fn periodicity_warning(path: &Path, report: &PeriodicityReport) -> Option<String> {
    if report.passed() {
        return None;
    }
    Some(format!(
        "warning: {}: {} periodicity violation(s), {} evaluation error(s)",
        path.display(),
        report.violations.len(),
        report.errors.len()
    ))
}

/// Runs a resolved configuration and writes the report if an output path is
/// configured.
pub fn execute(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let mut warnings = Vec::new();
    let mut text = Vec::new();
    let (exit_code, report) = match cfg {
        RunConfig::Table {
            system_path,
            flow,
            sampling,
            ..
        } => {
            let spec = load_system(system_path, Some(flow.eps_order))?;
            let periodicity = check_periodicity(&spec, PERIODICITY_SAMPLES, PERIODICITY_TOLERANCE);
            warnings.extend(periodicity_warning(system_path, &periodicity));
            let samples = sampling
                .points()
                .par_iter()
                .map(|z| -> Result<TableSample, CliError> {
                    let f = integrate_displacement(&spec, z, *flow)?;
                    let g = averaged_from_melnikov(&f)?;
                    Ok(TableSample {
                        point: z.clone(),
                        f: f.values(),
                        g: g.values(),
                    })
                })
                .collect::<Result<Vec<_>, _>>()?;
            let result = TableResult {
                order: spec.order,
                period: spec.period,
                periodicity,
                samples,
            };
            (0, to_json_string(&Report::new(cfg.name(), cfg, result))?)
        }
        RunConfig::Verify {
            system_path,
            ell,
            flow,
            tolerances,
            sampling,
            ..
        } => {
            let spec = load_system(system_path, Some(flow.eps_order))?;
            let periodicity = check_periodicity(&spec, PERIODICITY_SAMPLES, PERIODICITY_TOLERANCE);
            if let Some(v) = periodicity.violations.first() {
                return Err(CliError::NotPeriodic {
                    path: system_path.display().to_string(),
                    period: spec.period,
                    violations: periodicity.violations.len(),
                    level: v.level,
                    component: v.component + 1,
                });
            }
            warnings.extend(periodicity_warning(system_path, &periodicity));
            let config = VerifyConfig {
                tolerances: *tolerances,
                flow: *flow,
            };
            let verification = verify_proposition(&spec, *ell, &sampling.points(), &config)?;
            let code = if verification.verdict == Verdict::Pass { 0 } else { 1 };
            text.push(format!("verdict: {}", verdict_name(verification.verdict)));
            let result = VerifyResult {
                periodicity,
                verification,
            };
            (code, to_json_string(&Report::new(cfg.name(), cfg, result))?)
        }
        RunConfig::FindOrbit {
            system_path,
            ell,
            guess,
            orbit,
            ..
        } => {
            let spec = load_system(system_path, None)?;
            let periodicity = check_periodicity(&spec, PERIODICITY_SAMPLES, PERIODICITY_TOLERANCE);
            warnings.extend(periodicity_warning(system_path, &periodicity));
            let result = match find_periodic_orbit(&spec, *ell, guess, orbit) {
                Ok(r) => {
                    text.push(format!("zero: {:?}", r.zero));
                    if let Some(v) = &r.validation {
                        text.push(format!("periodicity residual at ε = {}: {:e}", v.eps, v.periodicity_residual));
                    }
                    OrbitResult::Found(r)
                }
                Err(AveragingError::DegenerateZero {
                    iteration,
                    point,
                    sigma_min,
                }) => {
                    text.push("degenerate-zero".into());
                    OrbitResult::DegenerateZero {
                        iteration,
                        point,
                        sigma_min,
                    }
                }
                Err(AveragingError::NoConvergence { iterations, trace }) => {
                    text.push("no-convergence".into());
                    OrbitResult::NoConvergence { iterations, trace }
                }
                Err(e) => return Err(e.into()),
            };
            let code = if matches!(result, OrbitResult::Found(_)) { 0 } else { 1 };
            (code, to_json_string(&Report::new(cfg.name(), cfg, result))?)
        }
        RunConfig::BellDebug { j, m, .. } => {
            let terms = enumerate_partitions(*j, *m)?;
            text.extend(terms.iter().map(|t| t.to_string()));
            let result = BellResult { j: *j, m: *m, terms };
            (0, to_json_string(&Report::new(cfg.name(), cfg, result))?)
        }
    };
    if let Some(path) = cfg.out() {
        std::fs::write(path, &report).map_err(|source| ReportError::Write {
            path: path.display().to_string(),
            source,
        })?;
    }
    Ok(Outcome {
        exit_code,
        report,
        text,
        warnings,
    })
}

fn verdict_name(v: Verdict) -> &'static str {
    match v {
        Verdict::Pass => "pass",
        Verdict::Fail => "fail",
        Verdict::HypothesisFailed => "hypothesis-failed",
    }
}

/// Parses `args`, runs, prints and returns the process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let result = resolve(cli).and_then(|cfg| execute(&cfg).map(|o| (cfg, o)));
    match result {
        Ok((cfg, outcome)) => {
            for w in &outcome.warnings {
                eprintln!("{w}");
            }
            if cfg.out().is_none() && !matches!(cfg, RunConfig::BellDebug { .. }) {
                print!("{}", outcome.report);
            }
            for line in &outcome.text {
                if matches!(cfg, RunConfig::BellDebug { .. }) || cfg.out().is_some() {
                    println!("{line}");
                } else {
                    eprintln!("{line}");
                }
            }
            outcome.exit_code
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn box_parsing() {
        assert_eq!(parse_box("-1:2", 2).unwrap(), vec![(-1.0, 2.0); 2]);
        assert_eq!(parse_box("0:1, -3:-2", 2).unwrap(), vec![(0.0, 1.0), (-3.0, -2.0)]);
        assert!(parse_box("1:0", 1).is_err());
        assert!(parse_box("0:1,0:1", 3).is_err());
        assert!(parse_box("a:1", 1).is_err());
        assert!(parse_box("01", 1).is_err());
    }

    #[test]
    fn random_sampling_is_deterministic_and_in_box() {
        let s = Sampling::Random {
            count: 10,
            seed: 42,
            bounds: vec![(0.0, 1.0), (-5.0, -4.0)],
        };
        let a = s.points();
        assert_eq!(a, s.points());
        assert!(a.iter().all(|p| (0.0..1.0).contains(&p[0]) && (-5.0..-4.0).contains(&p[1])));
        let other = Sampling::Random {
            count: 10,
            seed: 43,
            bounds: vec![(0.0, 1.0), (-5.0, -4.0)],
        };
        assert_ne!(a, other.points());
    }

    #[test]
    fn vector_parsing() {
        assert_eq!(parse_vector("1, -2.5,3e-1").unwrap(), vec![1.0, -2.5, 0.3]);
        assert!(parse_vector("1,,2").is_err());
    }

    #[test]
    fn bell_debug_terms() {
        let out = execute(&RunConfig::BellDebug { j: 4, m: 2, out: None }).unwrap();
        assert_eq!(out.exit_code, 0);
        assert_eq!(out.text, vec!["3·y2^2", "4·y1·y3"]);
    }

    #[test]
    fn bell_debug_invalid_index() {
        assert!(matches!(
            execute(&RunConfig::BellDebug { j: 2, m: 3, out: None }),
            Err(CliError::Bell(_))
        ));
    }
}
