//! Truncated multivariate power series in the displacement variables
//! `δz₁..δzₙ`, and the symmetric multilinear maps extracted from them.
//!
//! Coefficients are stored densely, ordered by total degree. Monomial tables
//! for a given `(num_vars, max_order)` are built once and shared, so cloning
//! a series only copies its coefficient vector.

use std::collections::HashMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::{Arc, Mutex, OnceLock};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SeriesError {
    #[error("series shape mismatch: ({lhs_vars} vars, order {lhs_order}) vs ({rhs_vars} vars, order {rhs_order})")]
    Mismatch {
        lhs_vars: usize,
        lhs_order: usize,
        rhs_vars: usize,
        rhs_order: usize,
    },
    #[error("variable index {var} out of range for {num_vars} variables")]
    VarOutOfRange { var: usize, num_vars: usize },
    #[error("derivative arity {arity} exceeds available series order {order}")]
    ArityExceedsOrder { arity: usize, order: usize },
    #[error("expected {expected} coordinates, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("cannot raise truncation order from {from} to {to}")]
    OrderIncrease { from: usize, to: usize },
    #[error("multilinear map needs at least one component series")]
    NoComponents,
}

/// Monomial bookkeeping shared by every series with the same shape.
#[derive(Debug)]
struct Layout {
    num_vars: usize,
    max_order: usize,
    monomials: Vec<Vec<u8>>,
    degrees: Vec<usize>,
    index: HashMap<Vec<u8>, usize>,
    /// For monomial `i`: every `(j, k)` with `x^i * x^j = x^k` inside the truncation.
    products: Vec<Vec<(u32, u32)>>,
}

/// Number of monomials in `n` variables of total degree `<= d`.
fn monomial_count(n: usize, d: usize) -> usize {
    // C(n + d, d)
    let mut c = 1usize;
    for i in 1..=d {
        c = c * (n + i) / i;
    }
    c
}

/// Exponent vectors of exact degree `deg`, lexicographically descending.
fn monomials_of_degree(n: usize, deg: usize) -> Vec<Vec<u8>> {
    fn rec(n: usize, rest: usize, prefix: &mut Vec<u8>, out: &mut Vec<Vec<u8>>) {
        if prefix.len() + 1 == n {
            prefix.push(rest as u8);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for e in (0..=rest).rev() {
            prefix.push(e as u8);
            rec(n, rest - e, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(n, deg, &mut Vec::with_capacity(n), &mut out);
    out
}

impl Layout {
    fn build(num_vars: usize, max_order: usize) -> Layout {
        let mut monomials = Vec::with_capacity(monomial_count(num_vars, max_order));
        let mut degrees = Vec::new();
        for deg in 0..=max_order {
            for m in monomials_of_degree(num_vars, deg) {
                monomials.push(m);
                degrees.push(deg);
            }
        }
        let index: HashMap<Vec<u8>, usize> = monomials
            .iter()
            .enumerate()
            .map(|(i, m)| (m.clone(), i))
            .collect();
        let mut products = Vec::with_capacity(monomials.len());
        let mut buf = vec![0u8; num_vars];
        for (i, a) in monomials.iter().enumerate() {
            let mut row = Vec::new();
            for (j, b) in monomials.iter().enumerate() {
                if degrees[i] + degrees[j] > max_order {
                    // degrees are sorted, nothing further fits
                    break;
                }
                for v in 0..num_vars {
                    buf[v] = a[v] + b[v];
                }
                row.push((j as u32, index[&buf] as u32));
            }
            products.push(row);
        }
        Layout {
            num_vars,
            max_order,
            monomials,
            degrees,
            index,
            products,
        }
    }

    fn get(num_vars: usize, max_order: usize) -> Arc<Layout> {
        static CACHE: OnceLock<Mutex<HashMap<(usize, usize), Arc<Layout>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        let mut guard = cache.lock().expect("layout cache poisoned");
        guard
            .entry((num_vars, max_order))
            .or_insert_with(|| Arc::new(Layout::build(num_vars, max_order)))
            .clone()
    }

    fn len(&self) -> usize {
        self.monomials.len()
    }
}

/// Univariate elementary functions that can be composed with a series.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Elementary {
    Sin,
    Cos,
    Exp,
}

impl Elementary {
    /// `q`-th derivative of the function at `c`.
    pub fn derivative_at(self, q: usize, c: f64) -> f64 {
        match self {
            Elementary::Exp => c.exp(),
            Elementary::Sin => match q % 4 {
                0 => c.sin(),
                1 => c.cos(),
                2 => -c.sin(),
                _ => -c.cos(),
            },
            Elementary::Cos => match q % 4 {
                0 => c.cos(),
                1 => -c.sin(),
                2 => -c.cos(),
                _ => c.sin(),
            },
        }
    }
}

/// Truncated Taylor polynomial in `num_vars` displacement variables up to
/// total degree `max_order`.
#[derive(Clone)]
pub struct TruncatedSeries {
    layout: Arc<Layout>,
    coeffs: Vec<f64>,
}

impl PartialEq for TruncatedSeries {
    fn eq(&self, other: &Self) -> bool {
        self.num_vars() == other.num_vars()
            && self.max_order() == other.max_order()
            && self.coeffs == other.coeffs
    }
}

impl fmt::Debug for TruncatedSeries {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TruncatedSeries")
            .field("num_vars", &self.num_vars())
            .field("max_order", &self.max_order())
            .field("coeffs", &self.coeffs)
            .finish()
    }
}

impl TruncatedSeries {
    pub fn zero(num_vars: usize, max_order: usize) -> Self {
        assert!(num_vars > 0, "a series needs at least one variable");
        let layout = Layout::get(num_vars, max_order);
        let coeffs = vec![0.0; layout.len()];
        TruncatedSeries { layout, coeffs }
    }

    pub fn constant(num_vars: usize, max_order: usize, value: f64) -> Self {
        let mut s = Self::zero(num_vars, max_order);
        s.coeffs[0] = value;
        s
    }

    /// `value + δz_var`: the seed for expanding around a base point.
    pub fn variable(num_vars: usize, max_order: usize, var: usize, value: f64) -> Result<Self, SeriesError> {
        if var >= num_vars {
            return Err(SeriesError::VarOutOfRange { var, num_vars });
        }
        let mut s = Self::constant(num_vars, max_order, value);
        if max_order >= 1 {
            // degree-1 monomials follow the constant, e_1 first
            s.coeffs[1 + var] = 1.0;
        }
        Ok(s)
    }

    /// Builds a series from `(exponent, coefficient)` pairs. Terms above the
    /// truncation order are dropped.
    pub fn from_terms<'a, I>(num_vars: usize, max_order: usize, terms: I) -> Result<Self, SeriesError>
    where
        I: IntoIterator<Item = (&'a [u8], f64)>,
    {
        let mut s = Self::zero(num_vars, max_order);
        for (exp, c) in terms {
            if exp.len() != num_vars {
                return Err(SeriesError::DimensionMismatch {
                    expected: num_vars,
                    got: exp.len(),
                });
            }
            if let Some(&i) = s.layout.index.get(exp) {
                s.coeffs[i] += c;
            }
        }
        Ok(s)
    }

    /// Same shape as `self`, constant value `c`.
    pub fn constant_like(&self, c: f64) -> Self {
        let mut coeffs = vec![0.0; self.coeffs.len()];
        coeffs[0] = c;
        TruncatedSeries {
            layout: self.layout.clone(),
            coeffs,
        }
    }

    pub fn num_vars(&self) -> usize {
        self.layout.num_vars
    }

    pub fn max_order(&self) -> usize {
        self.layout.max_order
    }

    pub fn constant_term(&self) -> f64 {
        self.coeffs[0]
    }

    /// Coefficient of `δz^exponent`; zero when the degree exceeds the truncation.
    pub fn coeff(&self, exponent: &[u8]) -> f64 {
        self.layout
            .index
            .get(exponent)
            .map_or(0.0, |&i| self.coeffs[i])
    }

    /// Iterates over `(exponent, coefficient)` for every stored monomial,
    /// including zero coefficients.
    pub fn terms(&self) -> impl Iterator<Item = (&[u8], f64)> + '_ {
        self.layout
            .monomials
            .iter()
            .zip(&self.coeffs)
            .map(|(m, &c)| (m.as_slice(), c))
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|&c| c == 0.0)
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().fold(0.0, |m, c| m.max(c.abs()))
    }

    fn check_same_shape(&self, other: &Self) -> Result<(), SeriesError> {
        if Arc::ptr_eq(&self.layout, &other.layout)
            || (self.num_vars() == other.num_vars() && self.max_order() == other.max_order())
        {
            Ok(())
        } else {
            Err(SeriesError::Mismatch {
                lhs_vars: self.num_vars(),
                lhs_order: self.max_order(),
                rhs_vars: other.num_vars(),
                rhs_order: other.max_order(),
            })
        }
    }

    pub fn try_add(&self, other: &Self) -> Result<Self, SeriesError> {
        self.check_same_shape(other)?;
        let coeffs = self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a + b).collect();
        Ok(TruncatedSeries {
            layout: self.layout.clone(),
            coeffs,
        })
    }

    pub fn try_sub(&self, other: &Self) -> Result<Self, SeriesError> {
        self.check_same_shape(other)?;
        let coeffs = self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a - b).collect();
        Ok(TruncatedSeries {
            layout: self.layout.clone(),
            coeffs,
        })
    }

    /// In-place `self += factor * other`.
    pub fn try_add_scaled(&mut self, factor: f64, other: &Self) -> Result<(), SeriesError> {
        self.check_same_shape(other)?;
        for (a, b) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *a += factor * b;
        }
        Ok(())
    }

    pub fn scale(&self, factor: f64) -> Self {
        TruncatedSeries {
            layout: self.layout.clone(),
            coeffs: self.coeffs.iter().map(|c| c * factor).collect(),
        }
    }

    pub fn add_constant(&self, c: f64) -> Self {
        let mut out = self.clone();
        out.coeffs[0] += c;
        out
    }

    /// Cauchy product, discarding every term above the truncation order.
    pub fn try_mul(&self, other: &Self) -> Result<Self, SeriesError> {
        self.check_same_shape(other)?;
        let mut coeffs = vec![0.0; self.coeffs.len()];
        for (i, &a) in self.coeffs.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            for &(j, k) in &self.layout.products[i] {
                coeffs[k as usize] += a * other.coeffs[j as usize];
            }
        }
        Ok(TruncatedSeries {
            layout: self.layout.clone(),
            coeffs,
        })
    }

    pub fn powi(&self, exponent: u32) -> Self {
        let mut result = self.constant_like(1.0);
        let mut base = self.clone();
        let mut e = exponent;
        while e > 0 {
            if e & 1 == 1 {
                result = &result * &base;
            }
            e >>= 1;
            if e > 0 {
                base = &base * &base;
            }
        }
        result
    }

    /// `f(c + ν) = Σ_q f⁽q⁾(c) ν^q / q!` with `c` the constant term.
    pub fn compose(&self, func: Elementary) -> Self {
        let c = self.constant_term();
        let mut nilpotent = self.clone();
        nilpotent.coeffs[0] = 0.0;
        let mut out = self.constant_like(func.derivative_at(0, c));
        let mut power = self.constant_like(1.0);
        let mut factorial = 1.0;
        for q in 1..=self.max_order() {
            power = &power * &nilpotent;
            factorial *= q as f64;
            let d = func.derivative_at(q, c);
            if d != 0.0 {
                out.try_add_scaled(d / factorial, &power)
                    .expect("shapes agree by construction");
            }
        }
        out
    }

    pub fn sin(&self) -> Self {
        self.compose(Elementary::Sin)
    }

    pub fn cos(&self) -> Self {
        self.compose(Elementary::Cos)
    }

    pub fn exp(&self) -> Self {
        self.compose(Elementary::Exp)
    }

    /// Formal partial derivative in `δz_var`. The result is truncated one
    /// order lower (order-0 input gives the order-0 zero series).
    pub fn partial(&self, var: usize) -> Result<Self, SeriesError> {
        let n = self.num_vars();
        if var >= n {
            return Err(SeriesError::VarOutOfRange { var, num_vars: n });
        }
        let order = self.max_order().saturating_sub(1);
        let mut out = TruncatedSeries::zero(n, order);
        if self.max_order() == 0 {
            return Ok(out);
        }
        let mut buf = vec![0u8; n];
        for (i, exp) in self.layout.monomials.iter().enumerate() {
            let c = self.coeffs[i];
            if exp[var] == 0 || c == 0.0 {
                continue;
            }
            buf.copy_from_slice(exp);
            buf[var] -= 1;
            let k = out.layout.index[&buf];
            out.coeffs[k] += c * exp[var] as f64;
        }
        Ok(out)
    }

    /// Drops every term above `order`.
    pub fn truncate(&self, order: usize) -> Result<Self, SeriesError> {
        if order > self.max_order() {
            return Err(SeriesError::OrderIncrease {
                from: self.max_order(),
                to: order,
            });
        }
        if order == self.max_order() {
            return Ok(self.clone());
        }
        let layout = Layout::get(self.num_vars(), order);
        let coeffs = self.coeffs[..layout.len()].to_vec();
        Ok(TruncatedSeries { layout, coeffs })
    }

    /// Evaluates the polynomial at `δz = point`.
    pub fn eval(&self, point: &[f64]) -> Result<f64, SeriesError> {
        let n = self.num_vars();
        if point.len() != n {
            return Err(SeriesError::DimensionMismatch {
                expected: n,
                got: point.len(),
            });
        }
        let d = self.max_order();
        // powers[v][e] = point[v]^e
        let powers: Vec<Vec<f64>> = point
            .iter()
            .map(|&p| {
                let mut row = Vec::with_capacity(d + 1);
                let mut acc = 1.0;
                for _ in 0..=d {
                    row.push(acc);
                    acc *= p;
                }
                row
            })
            .collect();
        let mut sum = 0.0;
        for (exp, &c) in self.layout.monomials.iter().zip(&self.coeffs) {
            if c == 0.0 {
                continue;
            }
            let mut term = c;
            for (v, &e) in exp.iter().enumerate() {
                term *= powers[v][e as usize];
            }
            sum += term;
        }
        Ok(sum)
    }

    /// Total degree of `exponent` if it is inside the truncation.
    pub fn degree_of(&self, exponent: &[u8]) -> Option<usize> {
        self.layout.index.get(exponent).map(|&i| self.layout.degrees[i])
    }
}

impl Add for &TruncatedSeries {
    type Output = TruncatedSeries;
    fn add(self, rhs: &TruncatedSeries) -> TruncatedSeries {
        self.try_add(rhs).expect("series shapes must agree")
    }
}

impl Sub for &TruncatedSeries {
    type Output = TruncatedSeries;
    fn sub(self, rhs: &TruncatedSeries) -> TruncatedSeries {
        self.try_sub(rhs).expect("series shapes must agree")
    }
}

impl Mul for &TruncatedSeries {
    type Output = TruncatedSeries;
    fn mul(self, rhs: &TruncatedSeries) -> TruncatedSeries {
        self.try_mul(rhs).expect("series shapes must agree")
    }
}

impl Neg for &TruncatedSeries {
    type Output = TruncatedSeries;
    fn neg(self) -> TruncatedSeries {
        self.scale(-1.0)
    }
}

/// One series per state component; the spatial Taylor data of a vector field.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesVector(pub Vec<TruncatedSeries>);

impl SeriesVector {
    pub fn zero(dim: usize, num_vars: usize, max_order: usize) -> Self {
        SeriesVector(vec![TruncatedSeries::zero(num_vars, max_order); dim])
    }

    /// `base + δz` expanded componentwise.
    pub fn identity_at(base: &[f64], max_order: usize) -> Self {
        let n = base.len();
        SeriesVector(
            base.iter()
                .enumerate()
                .map(|(i, &z)| TruncatedSeries::variable(n, max_order, i, z).expect("index in range"))
                .collect(),
        )
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn max_order(&self) -> usize {
        self.0.first().map_or(0, |s| s.max_order())
    }

    pub fn constant_terms(&self) -> Vec<f64> {
        self.0.iter().map(|s| s.constant_term()).collect()
    }

    pub fn truncate(&self, order: usize) -> Result<Self, SeriesError> {
        self.0.iter().map(|s| s.truncate(order)).collect::<Result<_, _>>().map(SeriesVector)
    }

    pub fn components(&self) -> &[TruncatedSeries] {
        &self.0
    }
}

/// Symmetric `m`-linear map `ℝⁿ × … × ℝⁿ → ℝⁿ`.
///
/// `entries` stores, for every ordered index tuple `(i₁, …, i_m)`, the output
/// vector `∂ᵐf/∂z_{i₁}…∂z_{i_m}`. Arity 0 is the function value itself.
#[derive(Debug, Clone, PartialEq)]
pub struct MultilinearMap {
    arity: usize,
    dim: usize,
    entries: Vec<f64>,
}

impl MultilinearMap {
    pub fn zero(arity: usize, dim: usize) -> Self {
        MultilinearMap {
            arity,
            dim,
            entries: vec![0.0; dim.pow(arity as u32) * dim],
        }
    }

    /// Wraps raw storage laid out as described on the type; the caller is
    /// responsible for symmetry.
    pub fn from_raw(arity: usize, dim: usize, entries: Vec<f64>) -> Result<Self, SeriesError> {
        let expected = dim.pow(arity as u32) * dim;
        if entries.len() != expected {
            return Err(SeriesError::DimensionMismatch {
                expected,
                got: entries.len(),
            });
        }
        Ok(MultilinearMap { arity, dim, entries })
    }

    /// Arity-0 map holding `value`.
    pub fn from_value(value: Vec<f64>) -> Self {
        MultilinearMap {
            arity: 0,
            dim: value.len(),
            entries: value,
        }
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn offset(&self, indices: &[usize]) -> usize {
        let mut flat = 0;
        for &i in indices {
            flat = flat * self.dim + i;
        }
        flat * self.dim
    }

    /// Output vector for the ordered input index tuple.
    pub fn entry(&self, indices: &[usize]) -> &[f64] {
        assert_eq!(indices.len(), self.arity, "index tuple length must equal arity");
        let o = self.offset(indices);
        &self.entries[o..o + self.dim]
    }

    fn entry_mut(&mut self, indices: &[usize]) -> &mut [f64] {
        let o = self.offset(indices);
        let n = self.dim;
        &mut self.entries[o..o + n]
    }

    /// For arity 0, the stored vector.
    pub fn value(&self) -> &[f64] {
        self.entry(&[])
    }

    /// `L[u₁, …, u_m]`.
    pub fn apply(&self, args: &[&[f64]]) -> Result<Vec<f64>, SeriesError> {
        if args.len() != self.arity {
            return Err(SeriesError::DimensionMismatch {
                expected: self.arity,
                got: args.len(),
            });
        }
        for a in args {
            if a.len() != self.dim {
                return Err(SeriesError::DimensionMismatch {
                    expected: self.dim,
                    got: a.len(),
                });
            }
        }
        let mut out = vec![0.0; self.dim];
        for_each_tuple(self.dim, self.arity, |idx| {
            let mut w = 1.0;
            for (slot, &i) in idx.iter().enumerate() {
                w *= args[slot][i];
                if w == 0.0 {
                    return;
                }
            }
            let e = self.entry(idx);
            for (o, v) in out.iter_mut().zip(e) {
                *o += w * v;
            }
        });
        Ok(out)
    }

    /// Jacobian layout for arity 1: `rows[out][in]`.
    pub fn as_matrix(&self) -> Vec<Vec<f64>> {
        assert_eq!(self.arity, 1, "matrix view needs arity 1");
        (0..self.dim)
            .map(|out| (0..self.dim).map(|i| self.entry(&[i])[out]).collect())
            .collect()
    }

    /// Largest deviation between entries related by an index permutation.
    pub fn symmetry_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for_each_tuple(self.dim, self.arity, |idx| {
            let mut sorted = idx.to_vec();
            sorted.sort_unstable();
            let a = self.entry(idx);
            let b = self.entry(&sorted);
            for (x, y) in a.iter().zip(b) {
                worst = worst.max((x - y).abs());
            }
        });
        worst
    }

    pub fn max_abs(&self) -> f64 {
        self.entries.iter().fold(0.0, |m, c| m.max(c.abs()))
    }

    pub fn raw_entries(&self) -> &[f64] {
        &self.entries
    }
}

/// Calls `f` on every ordered tuple in `{0..n}^m`.
pub(crate) fn for_each_tuple(n: usize, m: usize, mut f: impl FnMut(&[usize])) {
    let mut idx = vec![0usize; m];
    loop {
        f(&idx);
        let mut slot = m;
        loop {
            if slot == 0 {
                return;
            }
            slot -= 1;
            idx[slot] += 1;
            if idx[slot] < n {
                break;
            }
            idx[slot] = 0;
        }
    }
}

fn factorial(k: usize) -> f64 {
    (1..=k).fold(1.0, |acc, i| acc * i as f64)
}

/// The `m`-th derivative `dᵐF(z)` of the vector field whose Taylor data
/// around `z` are `components`.
///
/// The entry for tuple `(i₁, …, i_m)` is `α! · c_α`, where `α` counts how
/// often each variable occurs, so that `dᵐF[u, …, u]` equals `m!` times the
/// degree-`m` part evaluated at `δz = u`.
pub fn extract_multilinear(components: &[TruncatedSeries], m: usize) -> Result<MultilinearMap, SeriesError> {
    let first = components.first().ok_or(SeriesError::NoComponents)?;
    let n = first.num_vars();
    for c in components {
        if c.max_order() < m {
            return Err(SeriesError::ArityExceedsOrder {
                arity: m,
                order: c.max_order(),
            });
        }
        if c.num_vars() != n {
            return Err(SeriesError::Mismatch {
                lhs_vars: n,
                lhs_order: first.max_order(),
                rhs_vars: c.num_vars(),
                rhs_order: c.max_order(),
            });
        }
    }
    let dim = components.len();
    // input and output spaces coincide: one component per variable
    if n != dim {
        return Err(SeriesError::DimensionMismatch { expected: n, got: dim });
    }
    let mut map = MultilinearMap::zero(m, dim);
    let mut alpha = vec![0u8; n];
    for_each_tuple(n, m, |idx| {
        alpha.iter_mut().for_each(|a| *a = 0);
        for &i in idx {
            alpha[i] += 1;
        }
        let weight: f64 = alpha.iter().map(|&a| factorial(a as usize)).product();
        let values: Vec<f64> = components.iter().map(|c| weight * c.coeff(&alpha)).collect();
        map.entry_mut(idx).copy_from_slice(&values);
    });
    Ok(map)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn x(n: usize, d: usize, var: usize) -> TruncatedSeries {
        TruncatedSeries::variable(n, d, var, 0.0).unwrap()
    }

    #[test]
    fn monomial_counts() {
        assert_eq!(monomial_count(1, 3), 4);
        assert_eq!(monomial_count(2, 2), 6);
        assert_eq!(monomial_count(4, 8), 495);
        assert_eq!(Layout::build(3, 4).len(), monomial_count(3, 4));
    }

    #[test]
    fn additive_inverse_and_identity_scale() {
        let a = &x(2, 3, 0) + &x(2, 3, 1).powi(2);
        assert!((&a + &(-&a)).is_zero());
        assert_eq!(a.scale(1.0), a);
    }

    #[test]
    fn difference_of_squares() {
        let one = TruncatedSeries::constant(1, 2, 1.0);
        let d = x(1, 2, 0);
        let p = &(&one + &d) * &(&one - &d);
        assert_eq!(p.coeff(&[0]), 1.0);
        assert_eq!(p.coeff(&[1]), 0.0);
        assert_eq!(p.coeff(&[2]), -1.0);
    }

    #[test]
    fn products_above_order_vanish() {
        let d = 4;
        let v = x(1, d, 0);
        assert!((&v.powi(d as u32) * &v).is_zero());
        assert!(!v.powi(d as u32).is_zero());
    }

    #[test]
    fn mismatched_shapes_are_rejected() {
        let a = TruncatedSeries::zero(1, 2);
        let b = TruncatedSeries::zero(1, 3);
        let c = TruncatedSeries::zero(2, 2);
        assert!(matches!(a.try_add(&b), Err(SeriesError::Mismatch { .. })));
        assert!(matches!(a.try_mul(&c), Err(SeriesError::Mismatch { .. })));
    }

    #[test]
    fn exp_of_zero_is_one() {
        let z = TruncatedSeries::zero(2, 4);
        assert_eq!(z.exp(), z.constant_like(1.0));
    }

    #[test]
    fn sine_of_variable() {
        let s = x(1, 3, 0).sin();
        assert_eq!(s.coeff(&[0]), 0.0);
        assert_eq!(s.coeff(&[1]), 1.0);
        assert_eq!(s.coeff(&[2]), 0.0);
        assert_relative_eq!(s.coeff(&[3]), -1.0 / 6.0, epsilon = 1e-15);
    }

    #[test]
    fn power_rule_and_constant_rule() {
        let p = &x(2, 3, 0).powi(2) * &x(2, 3, 1);
        let dp = p.partial(0).unwrap();
        assert_eq!(dp.max_order(), 2);
        assert_eq!(dp.coeff(&[1, 1]), 2.0);
        assert_eq!(dp.terms().filter(|(_, c)| *c != 0.0).count(), 1);
        let c = TruncatedSeries::constant(2, 3, 5.0);
        assert!(c.partial(1).unwrap().is_zero());
        assert!(matches!(c.partial(2), Err(SeriesError::VarOutOfRange { .. })));
        let flat = TruncatedSeries::constant(1, 0, 2.0).partial(0).unwrap();
        assert_eq!(flat.max_order(), 0);
        assert!(flat.is_zero());
    }

    #[test]
    fn eval_basics() {
        let c = TruncatedSeries::constant(3, 2, 4.5);
        assert_eq!(c.eval(&[1.0, -2.0, 3.0]).unwrap(), 4.5);
        assert_eq!(x(2, 1, 0).eval(&[1.0, 0.0]).unwrap(), 1.0);
        assert!(matches!(c.eval(&[1.0]), Err(SeriesError::DimensionMismatch { .. })));
    }

    #[test]
    fn truncate_keeps_low_degrees() {
        let a = (&x(2, 4, 0) + &x(2, 4, 1)).exp();
        let t = a.truncate(2).unwrap();
        assert_eq!(t.max_order(), 2);
        for (e, c) in t.terms() {
            assert_eq!(c, a.coeff(e));
        }
        assert!(a.truncate(5).is_err());
    }

    #[test]
    fn multilinear_of_product() {
        // f(z) = z1 z2 around (0.3, -0.7)
        let z1 = TruncatedSeries::variable(2, 2, 0, 0.3).unwrap();
        let z2 = TruncatedSeries::variable(2, 2, 1, -0.7).unwrap();
        let f = &z1 * &z2;
        let g = TruncatedSeries::zero(2, 2);
        let map = extract_multilinear(&[f, g], 2).unwrap();
        let u = [1.5, -2.0];
        let v = [0.25, 3.0];
        let out = map.apply(&[&u, &v]).unwrap();
        assert_relative_eq!(out[0], u[0] * v[1] + u[1] * v[0], epsilon = 1e-14);
        assert_eq!(out[1], 0.0);
        let grad = extract_multilinear(&[z1, z2], 1).unwrap();
        assert_eq!(grad.as_matrix(), vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
    }

    #[test]
    fn constant_has_zero_derivatives() {
        let c = TruncatedSeries::constant(1, 3, 2.0);
        for m in 1..=3 {
            assert_eq!(extract_multilinear(&[c.clone()], m).unwrap().max_abs(), 0.0);
        }
        assert!(matches!(
            extract_multilinear(&[c], 4),
            Err(SeriesError::ArityExceedsOrder { .. })
        ));
    }

    fn arb_series(n: usize, d: usize) -> impl Strategy<Value = TruncatedSeries> {
        prop::collection::vec(-2.0f64..2.0, monomial_count(n, d)).prop_map(move |c| {
            let mut s = TruncatedSeries::zero(n, d);
            s.coeffs = c;
            s
        })
    }

    /// Independent check of the equal-argument normalisation:
    /// dᵐF[u,…,u] = m! · Σ_{|α|=m} c_α u^α.
    fn homogeneous_eval(s: &TruncatedSeries, m: usize, u: &[f64]) -> f64 {
        s.terms()
            .filter(|(e, _)| e.iter().map(|&k| k as usize).sum::<usize>() == m)
            .map(|(e, c)| c * e.iter().zip(u).map(|(&k, &x)| x.powi(k as i32)).product::<f64>())
            .sum()
    }

    proptest! {
        #[test]
        fn ring_axioms(a in arb_series(2, 3), b in arb_series(2, 3), c in arb_series(2, 3)) {
            prop_assert_eq!(&a + &b, &b + &a);
            for ((_, l), (_, r)) in (&a * &b).terms().zip((&b * &a).terms()) {
                prop_assert!((l - r).abs() <= 1e-14 * (1.0 + l.abs().max(r.abs())));
            }
            let lhs = &(&a * &b) * &c;
            let rhs = &a * &(&b * &c);
            for ((_, l), (_, r)) in lhs.terms().zip(rhs.terms()) {
                prop_assert!((l - r).abs() <= 1e-14 * (1.0 + l.abs().max(r.abs())) * 10.0);
            }
            let dl = &a * &(&b + &c);
            let dr = &(&a * &b) + &(&a * &c);
            for ((_, l), (_, r)) in dl.terms().zip(dr.terms()) {
                prop_assert!((l - r).abs() <= 1e-14 * (1.0 + l.abs().max(r.abs())) * 10.0);
            }
        }

        #[test]
        fn add_evaluates_pointwise(a in arb_series(3, 2), b in arb_series(3, 2),
                                   p in prop::collection::vec(-1.0f64..1.0, 3)) {
            let lhs = (&a + &b).eval(&p).unwrap();
            let rhs = a.eval(&p).unwrap() + b.eval(&p).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-13 * (1.0 + lhs.abs()));
        }

        #[test]
        fn eval_matches_naive_sum(a in arb_series(2, 4), p in prop::collection::vec(-1.5f64..1.5, 2)) {
            let naive: f64 = a.terms()
                .map(|(e, c)| c * p[0].powi(e[0] as i32) * p[1].powi(e[1] as i32))
                .sum();
            let v = a.eval(&p).unwrap();
            prop_assert!((v - naive).abs() <= 1e-12 * (1.0 + naive.abs()));
        }

        #[test]
        fn pythagorean_identity(a in arb_series(2, 4)) {
            let s = a.sin();
            let c = a.cos();
            let one = &(&s * &s) + &(&c * &c);
            prop_assert!((one.constant_term() - 1.0).abs() < 1e-13);
            for (e, v) in one.terms().skip(1) {
                prop_assert!(v.abs() < 1e-11, "coefficient {:?} = {}", e, v);
            }
        }

        #[test]
        fn product_rule(a in arb_series(2, 3), b in arb_series(2, 3), var in 0usize..2) {
            // ∂(ab) = ∂a·b + a·∂b, compared at order d-1
            let lhs = (&a * &b).partial(var).unwrap();
            let at = a.truncate(2).unwrap();
            let bt = b.truncate(2).unwrap();
            let rhs = &(&a.partial(var).unwrap() * &bt) + &(&at * &b.partial(var).unwrap());
            for ((_, l), (_, r)) in lhs.terms().zip(rhs.terms()) {
                prop_assert!((l - r).abs() <= 1e-12 * (1.0 + l.abs()));
            }
        }

        #[test]
        fn multilinear_is_symmetric_and_normalised(
            f in arb_series(3, 3), g in arb_series(3, 3), h in arb_series(3, 3),
            u in prop::collection::vec(-1.0f64..1.0, 3), m in 0usize..=3,
        ) {
            let comps = vec![f, g, h];
            let map = extract_multilinear(&comps, m).unwrap();
            prop_assert_eq!(map.symmetry_defect(), 0.0);
            let args: Vec<&[f64]> = vec![u.as_slice(); m];
            let applied = map.apply(&args).unwrap();
            for (k, comp) in comps.iter().enumerate() {
                let expected = factorial(m) * homogeneous_eval(comp, m, &u);
                prop_assert!((applied[k] - expected).abs() <= 1e-12 * (1.0 + expected.abs()));
            }
        }

        #[test]
        fn sine_matches_chain_rule_for_cubic(c0 in -1.0f64..1.0, c1 in -1.0f64..1.0,
                                             c2 in -1.0f64..1.0, c3 in -1.0f64..1.0) {
            // a = c0 + c1 x + c2 x² + c3 x³; coefficients of sin(a) up to x³ by hand:
            // sin(a) = sin c0 + cos c0·ν − sin c0·ν²/2 − cos c0·ν³/6
            let a = TruncatedSeries::from_terms(1, 3, [
                (&[0u8][..], c0), (&[1u8][..], c1), (&[2u8][..], c2), (&[3u8][..], c3),
            ]).unwrap();
            let s = a.sin();
            let (sn, cs) = c0.sin_cos();
            let e1 = cs * c1;
            let e2 = cs * c2 - sn * c1 * c1 / 2.0;
            let e3 = cs * c3 - sn * c1 * c2 - cs * c1.powi(3) / 6.0;
            prop_assert!((s.coeff(&[0]) - sn).abs() < 1e-15);
            prop_assert!((s.coeff(&[1]) - e1).abs() < 1e-14);
            prop_assert!((s.coeff(&[2]) - e2).abs() < 1e-14);
            prop_assert!((s.coeff(&[3]) - e3).abs() < 1e-14);
        }
    }

    #[test]
    fn multilinear_matches_finite_differences() {
        // F(z) = (sin(z1) * exp(z2), z1^2 * cos(z2)) at a fixed point
        let point = [0.4, -0.3];
        let field = |z: &[TruncatedSeries]| -> Vec<TruncatedSeries> {
            vec![&z[0].sin() * &z[1].exp(), &z[0].powi(2) * &z[1].cos()]
        };
        let seeds = SeriesVector::identity_at(&point, 2);
        let jet = field(&seeds.0);
        let eval_at = |p: &[f64]| -> Vec<f64> {
            let s = SeriesVector::identity_at(p, 0);
            field(&s.0).iter().map(|c| c.constant_term()).collect()
        };
        let h = 1e-4;
        let d1 = extract_multilinear(&jet, 1).unwrap();
        let d2 = extract_multilinear(&jet, 2).unwrap();
        for i in 0..2 {
            let mut pp = point;
            let mut pm = point;
            pp[i] += h;
            pm[i] -= h;
            let (fp, fm) = (eval_at(&pp), eval_at(&pm));
            for out in 0..2 {
                let fd = (fp[out] - fm[out]) / (2.0 * h);
                let ex = d1.entry(&[i])[out];
                assert!((fd - ex).abs() <= 1e-6 * ex.abs().max(1.0));
            }
            for j in 0..2 {
                let shift = |si: f64, sj: f64| {
                    let mut p = point;
                    p[i] += si;
                    p[j] += sj;
                    eval_at(&p)
                };
                let (pp, pm, mp, mm) = (shift(h, h), shift(h, -h), shift(-h, h), shift(-h, -h));
                for out in 0..2 {
                    let fd = (pp[out] - pm[out] - mp[out] + mm[out]) / (4.0 * h * h);
                    let ex = d2.entry(&[i, j])[out];
                    assert!((fd - ex).abs() <= 1e-6 * ex.abs().max(1.0), "{fd} vs {ex}");
                }
            }
        }
    }
}
