use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::ast::Expr;
use super::eval::{eval_ast, eval_scalar, EvalError};
use super::parser::{parse_expr, ExprError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SystemError {
    #[error("line {line}, column {column} ({context}): {source}")]
    Expression {
        context: String,
        line: usize,
        column: usize,
        source: ExprError,
    },
    #[error("line {line}, column {column}: {message}")]
    Document {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("dimension must be at least 1")]
    ZeroDimension,
    #[error("order must be at least 1")]
    ZeroOrder,
    #[error("field key `{0}` is not an integer ε-power")]
    BadFieldKey(String),
    #[error("ε-power {power} outside 1..={order}")]
    EpsPowerOutOfRange { power: usize, order: usize },
    #[error("fields.{level} has {got} components, expected {dim}")]
    ComponentCount { level: usize, got: usize, dim: usize },
    #[error("period expression must not depend on t or the state")]
    NonConstantPeriod,
    #[error("period must be positive and finite, got {0}")]
    NonPositivePeriod(f64),
    #[error("cannot evaluate period: {0}")]
    PeriodEval(EvalError),
}

/// On-disk layout of a system file.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SystemDocument {
    pub name: String,
    pub dim: usize,
    pub period: String,
    pub order: usize,
    pub fields: BTreeMap<String, Vec<String>>,
}

/// A validated family `x' = Σ_{i=1}^{k} εⁱ Fᵢ(t, x)` with period `T`.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemSpec {
    pub name: String,
    pub dim: usize,
    pub period: f64,
    pub period_source: String,
    pub order: usize,
    /// `Fᵢ` by ε-power; a missing power means `Fᵢ ≡ 0`.
    pub fields: BTreeMap<usize, Vec<Expr>>,
}

impl SystemSpec {
    /// Builds a system from expression sources, bypassing the document layer.
    pub fn from_sources(
        name: &str,
        dim: usize,
        period: &str,
        order: usize,
        fields: &[(usize, &[&str])],
    ) -> Result<SystemSpec, SystemError> {
        let doc = SystemDocument {
            name: name.to_string(),
            dim,
            period: period.to_string(),
            order,
            fields: fields
                .iter()
                .map(|(k, comps)| (k.to_string(), comps.iter().map(|s| s.to_string()).collect()))
                .collect(),
        };
        SystemSpec::from_document(&doc, None)
    }

    fn from_document(doc: &SystemDocument, text: Option<&str>) -> Result<SystemSpec, SystemError> {
        if doc.dim == 0 {
            return Err(SystemError::ZeroDimension);
        }
        if doc.order == 0 {
            return Err(SystemError::ZeroOrder);
        }
        let locate = |context: String, src: &str, err: ExprError| {
            let (line, column) = text
                .and_then(|t| locate_literal(t, src))
                .map_or((0, err.column()), |(l, c)| (l, c + err.column()));
            SystemError::Expression {
                context,
                line,
                column,
                source: err,
            }
        };
        let period_expr =
            parse_expr(&doc.period, doc.dim).map_err(|e| locate("period".into(), &doc.period, e))?;
        if period_expr.depends_on_state() || period_expr.depends_on_time() {
            return Err(SystemError::NonConstantPeriod);
        }
        let period = eval_scalar(&period_expr, 0.0).map_err(SystemError::PeriodEval)?;
        if !(period.is_finite() && period > 0.0) {
            return Err(SystemError::NonPositivePeriod(period));
        }
        let mut fields = BTreeMap::new();
        for (key, comps) in &doc.fields {
            let level: usize = key
                .trim()
                .parse()
                .map_err(|_| SystemError::BadFieldKey(key.clone()))?;
            if level == 0 || level > doc.order {
                return Err(SystemError::EpsPowerOutOfRange {
                    power: level,
                    order: doc.order,
                });
            }
            if comps.len() != doc.dim {
                return Err(SystemError::ComponentCount {
                    level,
                    got: comps.len(),
                    dim: doc.dim,
                });
            }
            let exprs = comps
                .iter()
                .enumerate()
                .map(|(c, src)| {
                    parse_expr(src, doc.dim).map_err(|e| locate(format!("fields.{level}[{c}]"), src, e))
                })
                .collect::<Result<Vec<_>, _>>()?;
            fields.insert(level, exprs);
        }
        Ok(SystemSpec {
            name: doc.name.clone(),
            dim: doc.dim,
            period,
            period_source: doc.period.clone(),
            order: doc.order,
            fields,
        })
    }

    /// Same system truncated or padded (with zero fields) to `order`.
    pub fn with_order(&self, order: usize) -> SystemSpec {
        let mut out = self.clone();
        out.order = order;
        out.fields.retain(|&k, _| k <= order);
        out
    }

    /// `Fᵢ`, if present.
    pub fn field(&self, level: usize) -> Option<&[Expr]> {
        self.fields.get(&level).map(Vec::as_slice)
    }

    /// Serialises back to the document layout, printing every expression.
    pub fn to_document(&self) -> SystemDocument {
        SystemDocument {
            name: self.name.clone(),
            dim: self.dim,
            period: self.period_source.clone(),
            order: self.order,
            fields: self
                .fields
                .iter()
                .map(|(k, v)| (k.to_string(), v.iter().map(|e| e.to_string()).collect()))
                .collect(),
        }
    }

    /// `Fᵢ(t, x)` over the reals.
    pub fn eval_field(&self, level: usize, t: f64, x: &[f64]) -> Result<Vec<f64>, EvalError> {
        match self.field(level) {
            Some(exprs) => exprs.iter().map(|e| eval_ast(e, t, x)).collect(),
            None => Ok(vec![0.0; self.dim]),
        }
    }
}

/// Parses a system file (TOML).
pub fn parse_system(text: &str) -> Result<SystemSpec, SystemError> {
    let doc: SystemDocument = toml::from_str(text).map_err(|e| {
        let (line, column) = e
            .span()
            .map_or((0, 0), |span| line_col(text, span.start));
        SystemError::Document {
            line,
            column,
            message: e.message().to_string(),
        }
    })?;
    SystemSpec::from_document(&doc, Some(text))
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, column)
}

/// Line and column (zero-based, so expression columns can be added) of the
/// first quoted occurrence of `src` in the document.
fn locate_literal(text: &str, src: &str) -> Option<(usize, usize)> {
    for quote in ['"', '\''] {
        let needle = format!("{quote}{src}{quote}");
        if let Some(pos) = text.find(&needle) {
            let (line, col) = line_col(text, pos + 1);
            return Some((line, col - 1));
        }
    }
    None
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodicityViolation {
    pub level: usize,
    pub component: usize,
    pub point: Vec<f64>,
    pub at_zero: f64,
    pub at_period: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodicityReport {
    pub samples: usize,
    pub tolerance: f64,
    pub violations: Vec<PeriodicityViolation>,
    /// Evaluation failures, by field level.
    pub errors: Vec<String>,
}

impl PeriodicityReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty() && self.errors.is_empty()
    }
}

/// Statistical check that `Fᵢ(0, x) = Fᵢ(T, x)` at `samples` random points
/// drawn from `[-1, 1]ⁿ` with a fixed seed.
pub fn check_periodicity(system: &SystemSpec, samples: usize, tol: f64) -> PeriodicityReport {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut violations = Vec::new();
    let mut errors = Vec::new();
    for _ in 0..samples.max(1) {
        let point: Vec<f64> = (0..system.dim).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        for &level in system.fields.keys() {
            let start = system.eval_field(level, 0.0, &point);
            let end = system.eval_field(level, system.period, &point);
            match (start, end) {
                (Ok(a), Ok(b)) => {
                    for (c, (&u, &v)) in a.iter().zip(&b).enumerate() {
                        if !((u - v).abs() <= tol * (1.0 + u.abs())) {
                            violations.push(PeriodicityViolation {
                                level,
                                component: c,
                                point: point.clone(),
                                at_zero: u,
                                at_period: v,
                            });
                        }
                    }
                }
                (Err(e), _) | (_, Err(e)) => errors.push(format!("fields.{level}: {e}")),
            }
        }
    }
    PeriodicityReport {
        samples: samples.max(1),
        tolerance: tol,
        violations,
        errors,
    }
}
