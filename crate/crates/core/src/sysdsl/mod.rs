//! Text format for T-periodic vector-field families and an evaluator that
//! runs their expression trees over any [`Numeric`](crate::numeric::Numeric)
//! algebra.

pub mod ast;
pub mod eval;
pub mod parser;
pub mod system;

pub use ast::{BinOp, Expr, UnaryFn};
pub use eval::{eval_ast, eval_scalar, EvalError};
pub use parser::{parse_expr, ExprError};
pub use system::{
    check_periodicity, parse_system, PeriodicityReport, PeriodicityViolation, SystemDocument,
    SystemError, SystemSpec,
};
