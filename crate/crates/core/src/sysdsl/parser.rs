//! Recursive-descent parser for field expressions.
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := '-' unary | power
//! power   := primary ('^' INTEGER)?
//! primary := NUMBER | 'pi' | 't' | 'x' INDEX
//!          | ('sin' | 'cos' | 'exp') '(' expr ')'
//!          | '(' expr ')'
//! ```

use thiserror::Error;

use super::ast::{BinOp, Expr, UnaryFn};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExprError {
    #[error("syntax error at expression column {column}: {message}")]
    Syntax { column: usize, message: String },
    #[error("unknown identifier `{name}` at column {column}")]
    UnknownIdentifier { name: String, column: usize },
    #[error("function `{function}` takes {expected} argument(s), got {got} (column {column})")]
    Arity {
        function: String,
        expected: usize,
        got: usize,
        column: usize,
    },
    #[error("denominator at column {column} depends on the state; only constant divisors are allowed")]
    NonConstantDenominator { column: usize },
    #[error("exponent at column {column} must be a non-negative integer literal")]
    BadExponent { column: usize },
}

impl ExprError {
    /// One-based column inside the expression text.
    pub fn column(&self) -> usize {
        match self {
            ExprError::Syntax { column, .. }
            | ExprError::UnknownIdentifier { column, .. }
            | ExprError::Arity { column, .. }
            | ExprError::NonConstantDenominator { column }
            | ExprError::BadExponent { column } => *column,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64, String),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    Comma,
    End,
}

struct Lexer {
    tokens: Vec<(Tok, usize)>,
}

impl Lexer {
    fn run(src: &str) -> Result<Lexer, ExprError> {
        let chars: Vec<char> = src.chars().collect();
        let mut tokens = Vec::new();
        let mut i = 0;
        while i < chars.len() {
            let c = chars[i];
            let col = i + 1;
            if c.is_whitespace() {
                i += 1;
                continue;
            }
            let single = match c {
                '+' => Some(Tok::Plus),
                '-' => Some(Tok::Minus),
                '*' => Some(Tok::Star),
                '/' => Some(Tok::Slash),
                '^' => Some(Tok::Caret),
                '(' => Some(Tok::LParen),
                ')' => Some(Tok::RParen),
                ',' => Some(Tok::Comma),
                _ => None,
            };
            if let Some(tok) = single {
                tokens.push((tok, col));
                i += 1;
                continue;
            }
            if c.is_ascii_digit() || c == '.' {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                    i += 1;
                }
                if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                    let mut j = i + 1;
                    if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                        j += 1;
                    }
                    if j < chars.len() && chars[j].is_ascii_digit() {
                        while j < chars.len() && chars[j].is_ascii_digit() {
                            j += 1;
                        }
                        i = j;
                    }
                }
                let text: String = chars[start..i].iter().collect();
                let value: f64 = text.parse().map_err(|_| ExprError::Syntax {
                    column: col,
                    message: format!("malformed number `{text}`"),
                })?;
                if !value.is_finite() {
                    return Err(ExprError::Syntax {
                        column: col,
                        message: format!("number `{text}` is not finite"),
                    });
                }
                tokens.push((Tok::Num(value, text), col));
                continue;
            }
            if c.is_ascii_alphabetic() || c == '_' {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                tokens.push((Tok::Ident(chars[start..i].iter().collect()), col));
                continue;
            }
            return Err(ExprError::Syntax {
                column: col,
                message: format!("unexpected character `{c}`"),
            });
        }
        tokens.push((Tok::End, chars.len() + 1));
        Ok(Lexer { tokens })
    }
}

struct Parser {
    tokens: Vec<(Tok, usize)>,
    pos: usize,
    dim: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.tokens[self.pos].0
    }

    fn column(&self) -> usize {
        self.tokens[self.pos].1
    }

    fn bump(&mut self) -> (Tok, usize) {
        let t = self.tokens[self.pos].clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<(), ExprError> {
        if *self.peek() == tok {
            self.bump();
            Ok(())
        } else {
            Err(ExprError::Syntax {
                column: self.column(),
                message: format!("expected {what}, found {}", describe(self.peek())),
            })
        }
    }

    fn expr(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.term()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Star => BinOp::Mul,
                Tok::Slash => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            let col = self.column();
            let rhs = self.unary()?;
            if op == BinOp::Div && rhs.depends_on_state() {
                return Err(ExprError::NonConstantDenominator { column: col });
            }
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Expr, ExprError> {
        if *self.peek() == Tok::Minus {
            self.bump();
            let inner = self.unary()?;
            return Ok(Expr::Unary(UnaryFn::Neg, Box::new(inner)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ExprError> {
        let base = self.primary()?;
        if *self.peek() != Tok::Caret {
            return Ok(base);
        }
        self.bump();
        let col = self.column();
        let exponent = match self.bump().0 {
            Tok::Num(v, text) if !text.contains(['.', 'e', 'E']) && v <= u32::MAX as f64 => v as u32,
            _ => return Err(ExprError::BadExponent { column: col }),
        };
        if *self.peek() == Tok::Caret {
            return Err(ExprError::Syntax {
                column: self.column(),
                message: "chained exponents need parentheses".into(),
            });
        }
        Ok(Expr::Pow(Box::new(base), exponent))
    }

    fn primary(&mut self) -> Result<Expr, ExprError> {
        let (tok, col) = self.bump();
        match tok {
            Tok::Num(v, _) => Ok(Expr::Const(v)),
            Tok::LParen => {
                let e = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(e)
            }
            Tok::Ident(name) => self.identifier(name, col),
            other => Err(ExprError::Syntax {
                column: col,
                message: format!("expected a value, found {}", describe(&other)),
            }),
        }
    }

    fn identifier(&mut self, name: String, col: usize) -> Result<Expr, ExprError> {
        let func = match name.as_str() {
            "pi" => return Ok(Expr::Pi),
            "t" => return Ok(Expr::Time),
            "sin" => Some(UnaryFn::Sin),
            "cos" => Some(UnaryFn::Cos),
            "exp" => Some(UnaryFn::Exp),
            _ => None,
        };
        if let Some(func) = func {
            self.expect(Tok::LParen, &format!("`(` after `{name}`"))?;
            let mut args = vec![self.expr()?];
            while *self.peek() == Tok::Comma {
                self.bump();
                args.push(self.expr()?);
            }
            self.expect(Tok::RParen, "`)`")?;
            if args.len() != 1 {
                return Err(ExprError::Arity {
                    function: name,
                    expected: 1,
                    got: args.len(),
                    column: col,
                });
            }
            return Ok(Expr::Unary(func, Box::new(args.pop().expect("one argument"))));
        }
        if let Some(digits) = name.strip_prefix('x') {
            if let Ok(k) = digits.parse::<usize>() {
                if !digits.starts_with('0') && (1..=self.dim).contains(&k) {
                    return Ok(Expr::State(k - 1));
                }
            }
        }
        Err(ExprError::UnknownIdentifier { name, column: col })
    }
}

fn describe(tok: &Tok) -> String {
    match tok {
        Tok::Num(_, text) => format!("number `{text}`"),
        Tok::Ident(name) => format!("`{name}`"),
        Tok::Plus => "`+`".into(),
        Tok::Minus => "`-`".into(),
        Tok::Star => "`*`".into(),
        Tok::Slash => "`/`".into(),
        Tok::Caret => "`^`".into(),
        Tok::LParen => "`(`".into(),
        Tok::RParen => "`)`".into(),
        Tok::Comma => "`,`".into(),
        Tok::End => "end of expression".into(),
    }
}

/// Parses one expression over the state variables `x1..x{dim}`.
pub fn parse_expr(src: &str, dim: usize) -> Result<Expr, ExprError> {
    let lexer = Lexer::run(src)?;
    let mut parser = Parser {
        tokens: lexer.tokens,
        pos: 0,
        dim,
    };
    let e = parser.expr()?;
    if *parser.peek() != Tok::End {
        return Err(ExprError::Syntax {
            column: parser.column(),
            message: format!("unexpected {}", describe(parser.peek())),
        });
    }
    Ok(e)
}
