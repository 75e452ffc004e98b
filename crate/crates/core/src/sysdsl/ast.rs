use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnaryFn {
    Sin,
    Cos,
    Exp,
    Neg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    /// Only with a denominator free of state variables.
    Div,
}

/// Expression tree for one component of a vector field.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Pi,
    Time,
    /// Zero-based state index (`x1` is `State(0)`).
    State(usize),
    Unary(UnaryFn, Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, u32),
}

impl Expr {
    pub fn depends_on_state(&self) -> bool {
        match self {
            Expr::Const(_) | Expr::Pi | Expr::Time => false,
            Expr::State(_) => true,
            Expr::Unary(_, a) | Expr::Pow(a, _) => a.depends_on_state(),
            Expr::Binary(_, a, b) => a.depends_on_state() || b.depends_on_state(),
        }
    }

    pub fn depends_on_time(&self) -> bool {
        match self {
            Expr::Const(_) | Expr::Pi | Expr::State(_) => false,
            Expr::Time => true,
            Expr::Unary(_, a) | Expr::Pow(a, _) => a.depends_on_time(),
            Expr::Binary(_, a, b) => a.depends_on_time() || b.depends_on_time(),
        }
    }

    /// Largest state index referenced, if any.
    pub fn max_state_index(&self) -> Option<usize> {
        match self {
            Expr::Const(_) | Expr::Pi | Expr::Time => None,
            Expr::State(i) => Some(*i),
            Expr::Unary(_, a) | Expr::Pow(a, _) => a.max_state_index(),
            Expr::Binary(_, a, b) => match (a.max_state_index(), b.max_state_index()) {
                (Some(x), Some(y)) => Some(x.max(y)),
                (x, y) => x.or(y),
            },
        }
    }

    pub fn is_zero_constant(&self) -> bool {
        matches!(self, Expr::Const(c) if *c == 0.0)
    }
}

/// Prints in the input grammar. Every compound subexpression is
/// parenthesised, so printing and re-parsing reproduces the tree.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) => write!(f, "{c:?}"),
            Expr::Pi => f.write_str("pi"),
            Expr::Time => f.write_str("t"),
            Expr::State(i) => write!(f, "x{}", i + 1),
            Expr::Unary(UnaryFn::Neg, a) => write!(f, "(-{a})"),
            Expr::Unary(func, a) => {
                let name = match func {
                    UnaryFn::Sin => "sin",
                    UnaryFn::Cos => "cos",
                    UnaryFn::Exp => "exp",
                    UnaryFn::Neg => unreachable!(),
                };
                write!(f, "{name}({a})")
            }
            Expr::Binary(op, a, b) => {
                let sym = match op {
                    BinOp::Add => "+",
                    BinOp::Sub => "-",
                    BinOp::Mul => "*",
                    BinOp::Div => "/",
                };
                write!(f, "({a} {sym} {b})")
            }
            Expr::Pow(a, e) => write!(f, "({a})^{e}"),
        }
    }
}
