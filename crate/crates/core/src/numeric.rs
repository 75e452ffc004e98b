//! The arithmetic an expression tree needs from whatever it is evaluated over.

use crate::tpsa::TruncatedSeries;

/// A commutative algebra over the reals with `sin`, `cos` and `exp`.
///
/// Constants are created from an existing value (`lift`) so that shaped
/// algebras (series of a given order, graded states) never need a global
/// notion of dimension.
pub trait Numeric: Clone + Send + Sync {
    fn lift(&self, c: f64) -> Self;
    fn plus(&self, other: &Self) -> Self;
    fn minus(&self, other: &Self) -> Self;
    fn times(&self, other: &Self) -> Self;
    fn scaled(&self, c: f64) -> Self;
    fn shifted(&self, c: f64) -> Self;
    fn sin(&self) -> Self;
    fn cos(&self) -> Self;
    fn exp(&self) -> Self;

    /// The real part obtained by dropping every nilpotent component.
    fn real_part(&self) -> f64;

    fn negated(&self) -> Self {
        self.scaled(-1.0)
    }

    fn powi(&self, exponent: u32) -> Self {
        let mut result = self.lift(1.0);
        let mut base = self.clone();
        let mut e = exponent;
        while e > 0 {
            if e & 1 == 1 {
                result = result.times(&base);
            }
            e >>= 1;
            if e > 0 {
                base = base.times(&base);
            }
        }
        result
    }
}

impl Numeric for f64 {
    fn lift(&self, c: f64) -> Self {
        c
    }
    fn plus(&self, other: &Self) -> Self {
        self + other
    }
    fn minus(&self, other: &Self) -> Self {
        self - other
    }
    fn times(&self, other: &Self) -> Self {
        self * other
    }
    fn scaled(&self, c: f64) -> Self {
        self * c
    }
    fn shifted(&self, c: f64) -> Self {
        self + c
    }
    fn sin(&self) -> Self {
        f64::sin(*self)
    }
    fn cos(&self) -> Self {
        f64::cos(*self)
    }
    fn exp(&self) -> Self {
        f64::exp(*self)
    }
    fn real_part(&self) -> f64 {
        *self
    }
    fn powi(&self, exponent: u32) -> Self {
        match i32::try_from(exponent) {
            Ok(e) => f64::powi(*self, e),
            Err(_) => f64::powf(*self, exponent as f64),
        }
    }
}

impl Numeric for TruncatedSeries {
    fn lift(&self, c: f64) -> Self {
        self.constant_like(c)
    }
    fn plus(&self, other: &Self) -> Self {
        self + other
    }
    fn minus(&self, other: &Self) -> Self {
        self - other
    }
    fn times(&self, other: &Self) -> Self {
        self * other
    }
    fn scaled(&self, c: f64) -> Self {
        self.scale(c)
    }
    fn shifted(&self, c: f64) -> Self {
        self.add_constant(c)
    }
    fn sin(&self) -> Self {
        TruncatedSeries::sin(self)
    }
    fn cos(&self) -> Self {
        TruncatedSeries::cos(self)
    }
    fn exp(&self) -> Self {
        TruncatedSeries::exp(self)
    }
    fn real_part(&self) -> f64 {
        self.constant_term()
    }
    fn powi(&self, exponent: u32) -> Self {
        TruncatedSeries::powi(self, exponent)
    }
}
