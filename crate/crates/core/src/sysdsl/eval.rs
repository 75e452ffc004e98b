use thiserror::Error;

use super::ast::{BinOp, Expr, UnaryFn};
use crate::numeric::Numeric;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("division by zero")]
    DivisionByZero,
    #[error("expression references x{index} but only {dim} state values were supplied")]
    StateOutOfRange { index: usize, dim: usize },
}

/// Intermediate value: subtrees that do not touch the state stay scalar, so
/// `cos(t) * x1` costs one scaling instead of an algebra product.
enum Value<A> {
    Scalar(f64),
    Alg(A),
}

/// Evaluates `expr` at time `t` with state `x` over any [`Numeric`] algebra.
pub fn eval_ast<A: Numeric>(expr: &Expr, t: f64, x: &[A]) -> Result<A, EvalError> {
    match eval_value(expr, t, x)? {
        Value::Alg(a) => Ok(a),
        Value::Scalar(c) => match x.first() {
            Some(proto) => Ok(proto.lift(c)),
            None => Err(EvalError::StateOutOfRange { index: 1, dim: 0 }),
        },
    }
}

/// Evaluates an expression that must not depend on the state.
pub fn eval_scalar(expr: &Expr, t: f64) -> Result<f64, EvalError> {
    match eval_value::<f64>(expr, t, &[])? {
        Value::Scalar(c) => Ok(c),
        Value::Alg(a) => Ok(a),
    }
}

fn eval_value<A: Numeric>(expr: &Expr, t: f64, x: &[A]) -> Result<Value<A>, EvalError> {
    use Value::{Alg, Scalar};
    Ok(match expr {
        Expr::Const(c) => Scalar(*c),
        Expr::Pi => Scalar(std::f64::consts::PI),
        Expr::Time => Scalar(t),
        Expr::State(i) => Alg(x
            .get(*i)
            .cloned()
            .ok_or(EvalError::StateOutOfRange { index: i + 1, dim: x.len() })?),
        Expr::Unary(func, a) => match (func, eval_value(a, t, x)?) {
            (UnaryFn::Neg, Scalar(v)) => Scalar(-v),
            (UnaryFn::Sin, Scalar(v)) => Scalar(v.sin()),
            (UnaryFn::Cos, Scalar(v)) => Scalar(v.cos()),
            (UnaryFn::Exp, Scalar(v)) => Scalar(v.exp()),
            (UnaryFn::Neg, Alg(v)) => Alg(v.negated()),
            (UnaryFn::Sin, Alg(v)) => Alg(v.sin()),
            (UnaryFn::Cos, Alg(v)) => Alg(v.cos()),
            (UnaryFn::Exp, Alg(v)) => Alg(v.exp()),
        },
        Expr::Pow(a, k) => match eval_value(a, t, x)? {
            Scalar(v) => Scalar(Numeric::powi(&v, *k)),
            Alg(v) => Alg(v.powi(*k)),
        },
        Expr::Binary(op, a, b) => {
            let lhs = eval_value(a, t, x)?;
            let rhs = eval_value(b, t, x)?;
            match (op, lhs, rhs) {
                (BinOp::Add, Scalar(p), Scalar(q)) => Scalar(p + q),
                (BinOp::Sub, Scalar(p), Scalar(q)) => Scalar(p - q),
                (BinOp::Mul, Scalar(p), Scalar(q)) => Scalar(p * q),
                (BinOp::Div, num, den) => {
                    // The parser rejects state-dependent denominators; a
                    // hand-built tree falls back to the real part.
                    let q = match den {
                        Scalar(q) => q,
                        Alg(q) => q.real_part(),
                    };
                    if q == 0.0 {
                        return Err(EvalError::DivisionByZero);
                    }
                    match num {
                        Scalar(p) => Scalar(p / q),
                        Alg(p) => Alg(p.scaled(1.0 / q)),
                    }
                }
                (BinOp::Add, Alg(p), Scalar(q)) | (BinOp::Add, Scalar(q), Alg(p)) => Alg(p.shifted(q)),
                (BinOp::Sub, Alg(p), Scalar(q)) => Alg(p.shifted(-q)),
                (BinOp::Sub, Scalar(p), Alg(q)) => Alg(q.negated().shifted(p)),
                (BinOp::Mul, Alg(p), Scalar(q)) | (BinOp::Mul, Scalar(q), Alg(p)) => Alg(p.scaled(q)),
                (BinOp::Add, Alg(p), Alg(q)) => Alg(p.plus(&q)),
                (BinOp::Sub, Alg(p), Alg(q)) => Alg(p.minus(&q)),
                (BinOp::Mul, Alg(p), Alg(q)) => Alg(p.times(&q)),
            }
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sysdsl::parser::parse_expr;
    use crate::tpsa::TruncatedSeries;
    use proptest::prelude::*;

    #[test]
    fn cosine_times_state() {
        let e = parse_expr("cos(t)*x1", 1).unwrap();
        assert_eq!(eval_ast(&e, 0.0, &[3.0]).unwrap(), 3.0);
    }

    #[test]
    fn square_over_series() {
        let e = parse_expr("x1^2", 1).unwrap();
        let x = TruncatedSeries::variable(1, 1, 0, 2.0).unwrap();
        let y = eval_ast(&e, 0.0, &[x]).unwrap();
        assert_eq!(y.coeff(&[0]), 4.0);
        assert_eq!(y.coeff(&[1]), 4.0);
    }

    #[test]
    fn constant_expression_lifts_to_algebra() {
        let e = parse_expr("2*pi", 1).unwrap();
        let x = TruncatedSeries::variable(1, 2, 0, 1.0).unwrap();
        let y = eval_ast(&e, 0.0, &[x]).unwrap();
        assert_eq!(y.constant_term(), 2.0 * std::f64::consts::PI);
        assert_eq!(y.coeff(&[1]), 0.0);
    }

    #[test]
    fn division_by_zero_constant() {
        let e = parse_expr("x1/(1-1)", 1).unwrap();
        assert_eq!(eval_ast(&e, 0.0, &[1.0]), Err(EvalError::DivisionByZero));
        let e = parse_expr("x1/sin(t)", 1).unwrap();
        assert_eq!(eval_ast(&e, 0.0, &[1.0]), Err(EvalError::DivisionByZero));
    }

    #[test]
    fn missing_state_is_reported() {
        let e = parse_expr("x2", 2).unwrap();
        assert!(matches!(eval_ast(&e, 0.0, &[1.0]), Err(EvalError::StateOutOfRange { index: 2, .. })));
    }

    const SOURCES: &[&str] = &[
        "sin(x1)*cos(t) + x2^3/3",
        "exp(-x1*x2) - 2*x1 + pi",
        "cos(x1 + t)^2 * (x2 - 1)",
        "-(x1 - x2)*sin(2*t)/pi + exp(x2)",
    ];

    proptest! {
        #[test]
        fn real_and_series_paths_agree(which in 0usize..4, t in -3.0f64..3.0,
                                       a in -1.0f64..1.0, b in -1.0f64..1.0, order in 0usize..4) {
            let e = parse_expr(SOURCES[which], 2).unwrap();
            let real = eval_ast(&e, t, &[a, b]).unwrap();
            let xs = vec![
                TruncatedSeries::variable(2, order, 0, a).unwrap(),
                TruncatedSeries::variable(2, order, 1, b).unwrap(),
            ];
            let series = eval_ast(&e, t, &xs).unwrap();
            prop_assert!((series.constant_term() - real).abs() <= 1e-14 * (1.0 + real.abs()));
        }
    }
}
