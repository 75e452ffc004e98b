//! Partial Bell polynomials `B_{j,m}` with vector-valued, time-polynomial
//! arguments fed through symmetric multilinear maps.
//!
//! With scalar arguments `B_{j,m}(y₁, …, y_{j−m+1}) = Σ_b c_b Π yᵢ^{bᵢ}`, the
//! sum running over `b` with `Σ bᵢ = m`, `Σ i·bᵢ = j`. For vectors, each
//! monomial `Π yᵢ^{bᵢ}` becomes the `m`-linear map applied to the argument
//! list with `yᵢ` repeated `bᵢ` times.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tpsa::{for_each_tuple, MultilinearMap, SeriesError, SeriesVector, TruncatedSeries};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BellError {
    #[error("invalid Bell index (j = {j}, m = {m}); need 1 <= m <= j")]
    InvalidIndex { j: usize, m: usize },
    #[error("Bell coefficient for j = {0} overflows 128-bit integers")]
    Overflow(usize),
    #[error("B_{{j,m}} needs {expected} arguments, got {got}")]
    ArgumentCount { expected: usize, got: usize },
    #[error("multilinear map has arity {got}, expected {expected}")]
    Arity { expected: usize, got: usize },
    #[error("dimension mismatch: map acts on {map}, argument has {arg}")]
    Dimension { map: usize, arg: usize },
}

/// One monomial of `B_{j,m}`: block-size profile `b` and its integer weight.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionTerm {
    /// `b[i − 1]` blocks of size `i`.
    pub b: Vec<usize>,
    /// `j! / (Π bᵢ! Π (i!)^{bᵢ})`.
    pub coefficient: u128,
}

impl fmt::Display for PartitionTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.coefficient)?;
        for (i, &bi) in self.b.iter().enumerate() {
            match bi {
                0 => {}
                1 => write!(f, "·y{}", i + 1)?,
                _ => write!(f, "·y{}^{}", i + 1, bi)?,
            }
        }
        Ok(())
    }
}

fn factorial_u128(n: usize) -> Option<u128> {
    (1..=n as u128).try_fold(1u128, |acc, i| acc.checked_mul(i))
}

/// All block-size profiles of `B_{j,m}` in lexicographic order of `b`.
pub fn enumerate_partitions(j: usize, m: usize) -> Result<Vec<PartitionTerm>, BellError> {
    if m == 0 || m > j {
        return Err(BellError::InvalidIndex { j, m });
    }
    let width = j - m + 1;
    let jf = factorial_u128(j).ok_or(BellError::Overflow(j))?;
    let mut out = Vec::new();
    let mut b = vec![0usize; width];

    fn rec(
        pos: usize,
        blocks_left: usize,
        size_left: usize,
        b: &mut Vec<usize>,
        jf: u128,
        j: usize,
        out: &mut Vec<PartitionTerm>,
    ) -> Result<(), BellError> {
        if pos == b.len() {
            if blocks_left == 0 && size_left == 0 {
                let mut denom: u128 = 1;
                for (i, &bi) in b.iter().enumerate() {
                    let fi = factorial_u128(i + 1).ok_or(BellError::Overflow(j))?;
                    let fb = factorial_u128(bi).ok_or(BellError::Overflow(j))?;
                    denom = denom
                        .checked_mul(fb)
                        .and_then(|d| (0..bi).try_fold(d, |acc, _| acc.checked_mul(fi)))
                        .ok_or(BellError::Overflow(j))?;
                }
                debug_assert_eq!(jf % denom, 0);
                out.push(PartitionTerm {
                    b: b.clone(),
                    coefficient: jf / denom,
                });
            }
            return Ok(());
        }
        let size = pos + 1;
        let max_here = blocks_left.min(size_left / size);
        for count in 0..=max_here {
            b[pos] = count;
            rec(pos + 1, blocks_left - count, size_left - count * size, b, jf, j, out)?;
        }
        b[pos] = 0;
        Ok(())
    }

    rec(0, m, j, &mut b, jf, j, &mut out)?;
    Ok(out)
}

/// Vector-space operations a [`TimePoly`] coefficient needs.
pub trait Coefficient: Clone + fmt::Debug {
    fn zeroed(&self) -> Self;
    fn is_zero(&self) -> bool;
    fn add_scaled(&mut self, factor: f64, other: &Self);
    fn scaled(&self, factor: f64) -> Self;
    fn dim(&self) -> usize;
}

impl Coefficient for Vec<f64> {
    fn zeroed(&self) -> Self {
        vec![0.0; self.len()]
    }
    fn is_zero(&self) -> bool {
        self.iter().all(|&v| v == 0.0)
    }
    fn add_scaled(&mut self, factor: f64, other: &Self) {
        for (a, b) in self.iter_mut().zip(other) {
            *a += factor * b;
        }
    }
    fn scaled(&self, factor: f64) -> Self {
        self.iter().map(|v| v * factor).collect()
    }
    fn dim(&self) -> usize {
        self.len()
    }
}

impl Coefficient for SeriesVector {
    fn zeroed(&self) -> Self {
        SeriesVector(self.0.iter().map(|s| s.constant_like(0.0)).collect())
    }
    fn is_zero(&self) -> bool {
        self.0.iter().all(TruncatedSeries::is_zero)
    }
    fn add_scaled(&mut self, factor: f64, other: &Self) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            a.try_add_scaled(factor, b).expect("coefficient shapes agree");
        }
    }
    fn scaled(&self, factor: f64) -> Self {
        SeriesVector(self.0.iter().map(|s| s.scale(factor)).collect())
    }
    fn dim(&self) -> usize {
        self.0.len()
    }
}

/// Polynomial in `t` with vector coefficients; trailing zero coefficients
/// are trimmed, so the zero polynomial has no coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct TimePoly<C> {
    zero: C,
    coeffs: Vec<C>,
}

impl<C: Coefficient> TimePoly<C> {
    /// The zero polynomial with coefficients shaped like `proto`.
    pub fn zero(proto: &C) -> Self {
        TimePoly {
            zero: proto.zeroed(),
            coeffs: Vec::new(),
        }
    }

    pub fn from_coeffs(proto: &C, coeffs: Vec<C>) -> Self {
        let mut p = TimePoly {
            zero: proto.zeroed(),
            coeffs,
        };
        p.trim();
        p
    }

    /// `t^power · c`.
    pub fn monomial(c: C, power: usize) -> Self {
        let zero = c.zeroed();
        let mut coeffs = vec![zero.clone(); power];
        coeffs.push(c);
        Self::from_coeffs(&zero, coeffs)
    }

    fn trim(&mut self) {
        while self.coeffs.last().is_some_and(Coefficient::is_zero) {
            self.coeffs.pop();
        }
    }

    pub fn dim(&self) -> usize {
        self.zero.dim()
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// `None` for the zero polynomial.
    pub fn degree(&self) -> Option<usize> {
        self.coeffs.len().checked_sub(1)
    }

    pub fn coeffs(&self) -> &[C] {
        &self.coeffs
    }

    /// Coefficient of `t^power` (zero past the degree).
    pub fn coeff(&self, power: usize) -> &C {
        self.coeffs.get(power).unwrap_or(&self.zero)
    }

    pub fn add_scaled(&mut self, factor: f64, other: &Self) {
        if self.coeffs.len() < other.coeffs.len() {
            self.coeffs.resize(other.coeffs.len(), self.zero.clone());
        }
        for (a, b) in self.coeffs.iter_mut().zip(&other.coeffs) {
            a.add_scaled(factor, b);
        }
        self.trim();
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self::from_coeffs(&self.zero, self.coeffs.iter().map(|c| c.scaled(factor)).collect())
    }

    /// Applies `f` to every coefficient (and the zero prototype).
    pub fn map_coeffs<D: Coefficient>(&self, f: impl Fn(&C) -> D) -> TimePoly<D> {
        TimePoly::from_coeffs(&f(&self.zero), self.coeffs.iter().map(f).collect())
    }

    /// `∫₀ᵗ p(s) ds` as a polynomial.
    pub fn integrate(&self) -> Self {
        let mut coeffs = Vec::with_capacity(self.coeffs.len() + 1);
        if !self.coeffs.is_empty() {
            coeffs.push(self.zero.clone());
        }
        for (p, c) in self.coeffs.iter().enumerate() {
            coeffs.push(c.scaled(1.0 / (p as f64 + 1.0)));
        }
        Self::from_coeffs(&self.zero, coeffs)
    }

    /// `∫₀ᵘ p(s) ds` as a vector.
    pub fn integrate_to(&self, upper: f64) -> C {
        let mut out = self.zero.clone();
        let mut power = upper;
        for (p, c) in self.coeffs.iter().enumerate() {
            out.add_scaled(power / (p as f64 + 1.0), c);
            power *= upper;
        }
        out
    }

    /// `p(t)`.
    pub fn eval(&self, t: f64) -> C {
        let mut out = self.zero.clone();
        let mut power = 1.0;
        for c in &self.coeffs {
            out.add_scaled(power, c);
            power *= t;
        }
        out
    }
}

/// A symmetric multilinear operator on coefficients of type `C`.
pub trait Multilinear<C> {
    fn arity(&self) -> usize;
    fn dim(&self) -> usize;
    fn apply(&self, args: &[&C]) -> C;
}

impl Multilinear<Vec<f64>> for MultilinearMap {
    fn arity(&self) -> usize {
        MultilinearMap::arity(self)
    }
    fn dim(&self) -> usize {
        MultilinearMap::dim(self)
    }
    fn apply(&self, args: &[&Vec<f64>]) -> Vec<f64> {
        let slices: Vec<&[f64]> = args.iter().map(|a| a.as_slice()).collect();
        MultilinearMap::apply(self, &slices).expect("argument shapes checked by caller")
    }
}

/// `dᵐG` at `z + δz` for a field given by its δz series: every entry is
/// itself a series, so applying it to series arguments yields a series.
#[derive(Debug, Clone)]
pub struct SeriesDerivative {
    arity: usize,
    dim: usize,
    /// `partials[flat(i₁..i_m)]` = `∂ᵐG/∂z_{i₁}…∂z_{i_m}`, shared across
    /// permutations of the index tuple.
    partials: Vec<SeriesVector>,
}

impl SeriesDerivative {
    /// Differentiates `field` `arity` times and truncates the partials to
    /// `order`.
    pub fn new(field: &SeriesVector, arity: usize, order: usize) -> Result<Self, SeriesError> {
        let n = field.dim();
        if field.max_order() < arity + order {
            return Err(SeriesError::ArityExceedsOrder {
                arity: arity + order,
                order: field.max_order(),
            });
        }
        let mut partials: Vec<Option<SeriesVector>> = vec![None; n.pow(arity as u32)];
        let flat = |idx: &[usize]| idx.iter().fold(0, |acc, &i| acc * n + i);
        let mut sorted_cache: std::collections::HashMap<Vec<usize>, SeriesVector> = std::collections::HashMap::new();
        let mut err = None;
        for_each_tuple(n, arity, |idx| {
            let mut sorted = idx.to_vec();
            sorted.sort_unstable();
            let value = sorted_cache.entry(sorted.clone()).or_insert_with(|| {
                let mut cur = field.clone();
                for &v in &sorted {
                    match cur.0.iter().map(|s| s.partial(v)).collect::<Result<Vec<_>, _>>() {
                        Ok(next) => cur = SeriesVector(next),
                        Err(e) => {
                            err = Some(e);
                            break;
                        }
                    }
                }
                cur.truncate(order).unwrap_or_else(|e| {
                    err = Some(e);
                    cur.clone()
                })
            });
            partials[flat(idx)] = Some(value.clone());
        });
        if let Some(e) = err {
            return Err(e);
        }
        Ok(SeriesDerivative {
            arity,
            dim: n,
            partials: partials.into_iter().map(|p| p.expect("every tuple visited")).collect(),
        })
    }
}

impl Multilinear<SeriesVector> for SeriesDerivative {
    fn arity(&self) -> usize {
        self.arity
    }
    fn dim(&self) -> usize {
        self.dim
    }
    fn apply(&self, args: &[&SeriesVector]) -> SeriesVector {
        let n = self.dim;
        let mut out = self.partials[0].zeroed();
        let mut flat = 0;
        for_each_tuple(n, self.arity, |idx| {
            let partial = &self.partials[flat];
            flat += 1;
            if partial.is_zero() {
                return;
            }
            let mut weight: Option<TruncatedSeries> = None;
            for (slot, &i) in idx.iter().enumerate() {
                let factor = &args[slot].0[i];
                if factor.is_zero() {
                    return;
                }
                weight = Some(match weight {
                    None => factor.clone(),
                    Some(w) => &w * factor,
                });
            }
            for (o, p) in out.0.iter_mut().zip(&partial.0) {
                let term = match &weight {
                    None => p.clone(),
                    Some(w) => p * w,
                };
                *o = &*o + &term;
            }
        });
        out
    }
}

/// `L[y⁽¹⁾(t), …, y⁽ᵐ⁾(t)] = Σ t^{p₁+…+p_m} L[c⁽¹⁾_{p₁}, …, c⁽ᵐ⁾_{p_m}]`.
pub fn apply_to_polys<C: Coefficient, L: Multilinear<C>>(map: &L, args: &[&TimePoly<C>], proto: &C) -> TimePoly<C> {
    if args.iter().any(|a| a.is_zero()) {
        return TimePoly::zero(proto);
    }
    let degree: usize = args.iter().map(|a| a.degree().unwrap_or(0)).sum();
    let mut coeffs = vec![proto.zeroed(); degree + 1];
    let m = args.len();
    let mut powers = vec![0usize; m];
    'outer: loop {
        let picks: Vec<&C> = powers.iter().zip(args).map(|(&p, a)| &a.coeffs[p]).collect();
        if picks.iter().all(|c| !c.is_zero()) {
            let value = map.apply(&picks);
            let total: usize = powers.iter().sum();
            coeffs[total].add_scaled(1.0, &value);
        }
        let mut slot = m;
        loop {
            if slot == 0 {
                break 'outer;
            }
            slot -= 1;
            powers[slot] += 1;
            if powers[slot] < args[slot].coeffs.len() {
                break;
            }
            powers[slot] = 0;
        }
    }
    TimePoly::from_coeffs(proto, coeffs)
}

/// `Σ_b c_b · L[y₁ (b₁ times), …, y_{j−m+1} (b_{j−m+1} times)]` with `m` the
/// arity of `L`.
pub fn bell_apply<C: Coefficient, L: Multilinear<C>>(
    map: &L,
    j: usize,
    ys: &[TimePoly<C>],
) -> Result<TimePoly<C>, BellError> {
    let m = map.arity();
    let terms = enumerate_partitions(j, m)?;
    let width = j - m + 1;
    if ys.len() < width {
        return Err(BellError::ArgumentCount {
            expected: width,
            got: ys.len(),
        });
    }
    for y in &ys[..width] {
        if y.dim() != map.dim() {
            return Err(BellError::Dimension {
                map: map.dim(),
                arg: y.dim(),
            });
        }
    }
    let proto = ys[0].zero.clone();
    let mut out = TimePoly::zero(&proto);
    for term in terms {
        // a zero yᵢ with bᵢ > 0 kills the term
        if term.b.iter().zip(ys).any(|(&bi, y)| bi > 0 && y.is_zero()) {
            continue;
        }
        let mut args: Vec<&TimePoly<C>> = Vec::with_capacity(m);
        for (i, &bi) in term.b.iter().enumerate() {
            for _ in 0..bi {
                args.push(&ys[i]);
            }
        }
        let value = apply_to_polys(map, &args, &proto);
        out.add_scaled(term.coefficient as f64, &value);
    }
    Ok(out)
}
