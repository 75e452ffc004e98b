//! The two-way recursion between Melnikov functions `fᵢ` and stroboscopic
//! averaged functions `gᵢ`:
//!
//! ```text
//! gᵢ = (1/T) (fᵢ − Σ_{j=1}^{i−1} Σ_{m=1}^{j} (1/j!) dᵐg_{i−j} ∫₀ᵀ B_{j,m}(ỹ₁, …, ỹ_{j−m+1}) ds)
//! ỹ₁ = t g₁
//! ỹᵢ = i! t gᵢ + Σ_{j=1}^{i−1} Σ_{m=1}^{j} (i!/j!) dᵐg_{i−j} ∫₀ᵗ B_{j,m}(ỹ₁, …, ỹ_{j−m+1}) ds
//! ```
//!
//! Everything runs over δz series, so the derivative tensors of every `gᵢ`
//! come out of the same pass. Level `i` is kept to spatial order
//! `d + 1 − i`, which is exactly what `dᵐg_{i−j}` with `m ≤ j` leaves.

use crate::bell::{bell_apply, Coefficient, SeriesDerivative, TimePoly};
use crate::flow::{derivative_tables, MelnikovTable};
use crate::tpsa::{MultilinearMap, SeriesVector};

use super::AveragingError;

/// Averaged functions `g₁..g_k`, their derivative tensors and the time
/// polynomials `ỹᵢ(t, z)` at a base point. Levels are one-based.
#[derive(Debug, Clone, PartialEq)]
pub struct AveragedTable {
    pub base_point: Vec<f64>,
    pub order: usize,
    pub period: f64,
    /// δz series of `gᵢ`, index `i − 1`; level `i` has spatial order `d + 1 − i`.
    pub jets: Vec<SeriesVector>,
    /// `derivs[i − 1][m]` is `dᵐgᵢ(z)` for `m` up to the jet order.
    pub derivs: Vec<Vec<MultilinearMap>>,
    /// `ỹᵢ(·, z)` at the base point.
    pub ytilde: Vec<TimePoly<Vec<f64>>>,
    /// `ỹᵢ(·, z + δz)` as series-valued polynomials.
    pub ytilde_jets: Vec<TimePoly<SeriesVector>>,
}

impl AveragedTable {
    pub fn g(&self, level: usize) -> &[f64] {
        self.derivs[level - 1][0].value()
    }

    pub fn deriv(&self, level: usize, arity: usize) -> &MultilinearMap {
        &self.derivs[level - 1][arity]
    }

    pub fn ytilde(&self, level: usize) -> &TimePoly<Vec<f64>> {
        &self.ytilde[level - 1]
    }

    pub fn values(&self) -> Vec<Vec<f64>> {
        (1..=self.order).map(|i| self.g(i).to_vec()).collect()
    }
}

/// Which form of the `g`-from-`f` sum to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecursionMode {
    /// The general recursion.
    Full,
    /// Assumes `g₁ = … = g_{ℓ−1} = 0`: those levels are set to zero and the
    /// outer sum stops at `j = i − ℓ`.
    Reduced { ell: usize },
}

fn factorial(n: usize) -> f64 {
    (1..=n).fold(1.0, |acc, i| acc * i as f64)
}

/// Spatial order used at every level: `o₁ + 1 − i` with `o₁` the order of
/// the first jet. Fails naming the missing arity when `o₁ < k − 1` or a
/// level is shorter than required.
fn level_orders(jets: &[SeriesVector]) -> Result<Vec<usize>, AveragingError> {
    let k = jets.len();
    let Some(first) = jets.first() else {
        return Ok(Vec::new());
    };
    let d = first.max_order();
    if d + 1 < k {
        return Err(AveragingError::InsufficientOrder {
            level: 1,
            needed: k - 1,
            available: d,
        });
    }
    let orders: Vec<usize> = (1..=k).map(|i| d + 1 - i).collect();
    for (idx, (jet, &o)) in jets.iter().zip(&orders).enumerate() {
        if jet.max_order() < o {
            return Err(AveragingError::InsufficientOrder {
                level: idx + 1,
                needed: o,
                available: jet.max_order(),
            });
        }
    }
    Ok(orders)
}

/// `Σ_{j ∈ js} Σ_{m=1}^{j} (1/j!) dᵐg_{i−j}[B_{j,m}(ỹ₁, …)]` at level `i`,
/// truncated to spatial order `order`.
fn bell_sum(
    level: usize,
    order: usize,
    js: std::ops::RangeInclusive<usize>,
    g: &[SeriesVector],
    ytilde: &[TimePoly<SeriesVector>],
    proto: &SeriesVector,
) -> Result<TimePoly<SeriesVector>, AveragingError> {
    let mut sum = TimePoly::zero(proto);
    let truncated: Vec<TimePoly<SeriesVector>> = ytilde
        .iter()
        .map(|y| y.map_coeffs(|c| c.truncate(order).expect("lower levels carry higher order")))
        .collect();
    for j in js {
        let lower = &g[level - j - 1];
        if lower.is_zero() {
            continue;
        }
        for m in 1..=j {
            let width = j - m + 1;
            if truncated[..width].iter().all(TimePoly::is_zero) {
                continue;
            }
            let map = SeriesDerivative::new(lower, m, order)?;
            let term = bell_apply(&map, j, &truncated[..width])?;
            sum.add_scaled(1.0 / factorial(j), &term);
        }
    }
    Ok(sum)
}

/// Runs the recursion from a Melnikov table.
pub fn averaged_from_melnikov(f: &MelnikovTable) -> Result<AveragedTable, AveragingError> {
    averaged_with_mode(f, RecursionMode::Full)
}

/// The reduced recursion under `g₁ = … = g_{ℓ−1} = 0`.
pub fn averaged_from_melnikov_reduced(f: &MelnikovTable, ell: usize) -> Result<AveragedTable, AveragingError> {
    averaged_with_mode(f, RecursionMode::Reduced { ell })
}

pub fn averaged_with_mode(f: &MelnikovTable, mode: RecursionMode) -> Result<AveragedTable, AveragingError> {
    let k = f.order;
    let period = f.period;
    let orders = level_orders(&f.jets)?;
    let ell = match mode {
        RecursionMode::Full => 1,
        RecursionMode::Reduced { ell } => {
            if ell == 0 || ell > k {
                return Err(AveragingError::InvalidEll { ell, order: k });
            }
            ell
        }
    };
    let mut g: Vec<SeriesVector> = Vec::with_capacity(k);
    let mut ytilde: Vec<TimePoly<SeriesVector>> = Vec::with_capacity(k);
    for level in 1..=k {
        let order = orders[level - 1];
        let f_level = f.jets[level - 1].truncate(order)?;
        let proto = f_level.zeroed();
        if level < ell {
            g.push(proto.clone());
            ytilde.push(TimePoly::zero(&proto));
            continue;
        }
        let top_j = level - ell;
        let sum = bell_sum(level, order, 1..=top_j, &g, &ytilde, &proto)?;
        let mut g_level = f_level;
        g_level.add_scaled(-1.0, &sum.integrate_to(period));
        let g_level = g_level.scaled(1.0 / period);
        let mut y = sum.integrate();
        y.add_scaled(1.0, &TimePoly::monomial(g_level.clone(), 1));
        ytilde.push(y.scaled(factorial(level)));
        g.push(g_level);
    }
    assemble(f.base_point.clone(), period, g, ytilde)
}

/// Inverse recursion: `fᵢ = T gᵢ + Σ (1/j!) dᵐg_{i−j} ∫₀ᵀ B_{j,m}(ỹ₁, …)`.
pub fn melnikov_from_averaged(g_table: &AveragedTable) -> Result<MelnikovTable, AveragingError> {
    let k = g_table.order;
    let period = g_table.period;
    let orders = level_orders(&g_table.jets)?;
    let mut g: Vec<SeriesVector> = Vec::with_capacity(k);
    let mut ytilde: Vec<TimePoly<SeriesVector>> = Vec::with_capacity(k);
    let mut f: Vec<SeriesVector> = Vec::with_capacity(k);
    for level in 1..=k {
        let order = orders[level - 1];
        let g_level = g_table.jets[level - 1].truncate(order)?;
        let proto = g_level.zeroed();
        let sum = bell_sum(level, order, 1..=level - 1, &g, &ytilde, &proto)?;
        let mut f_level = g_level.scaled(period);
        f_level.add_scaled(1.0, &sum.integrate_to(period));
        let mut y = sum.integrate();
        y.add_scaled(1.0, &TimePoly::monomial(g_level.clone(), 1));
        ytilde.push(y.scaled(factorial(level)));
        g.push(g_level);
        f.push(f_level);
    }
    Ok(MelnikovTable::from_jets(g_table.base_point.clone(), period, f)?)
}

/// Builds an [`AveragedTable`] from given δz series of `g₁..g_k`, computing
/// the `ỹᵢ` along the way.
pub fn averaged_from_jets(base_point: Vec<f64>, period: f64, jets: Vec<SeriesVector>) -> Result<AveragedTable, AveragingError> {
    let orders = level_orders(&jets)?;
    let mut g = Vec::with_capacity(jets.len());
    let mut ytilde = Vec::with_capacity(jets.len());
    for (idx, jet) in jets.iter().enumerate() {
        let level = idx + 1;
        let order = orders[idx];
        let g_level = jet.truncate(order)?;
        let proto = g_level.zeroed();
        let sum = bell_sum(level, order, 1..=level - 1, &g, &ytilde, &proto)?;
        let mut y = sum.integrate();
        y.add_scaled(1.0, &TimePoly::monomial(g_level.clone(), 1));
        ytilde.push(y.scaled(factorial(level)));
        g.push(g_level);
    }
    assemble(base_point, period, g, ytilde)
}

/// `ỹᵢ` alone, given `g₁..gᵢ` and `ỹ₁..ỹ_{i−1}` as series.
pub fn compute_ytilde(
    level: usize,
    g: &[SeriesVector],
    ytilde: &[TimePoly<SeriesVector>],
) -> Result<TimePoly<SeriesVector>, AveragingError> {
    if g.len() < level || ytilde.len() + 1 < level {
        return Err(AveragingError::MissingLevels {
            level,
            g_levels: g.len(),
            ytilde_levels: ytilde.len(),
        });
    }
    let order = g[level - 1].max_order();
    for (r, lower) in g[..level - 1].iter().enumerate() {
        let needed = order + (level - 1 - r);
        if lower.max_order() < needed {
            return Err(AveragingError::InsufficientOrder {
                level: r + 1,
                needed,
                available: lower.max_order(),
            });
        }
    }
    let proto = g[level - 1].zeroed();
    let sum = bell_sum(level, order, 1..=level - 1, g, &ytilde[..level - 1], &proto)?;
    let mut y = sum.integrate();
    y.add_scaled(1.0, &TimePoly::monomial(g[level - 1].clone(), 1));
    Ok(y.scaled(factorial(level)))
}

fn assemble(
    base_point: Vec<f64>,
    period: f64,
    g: Vec<SeriesVector>,
    ytilde_jets: Vec<TimePoly<SeriesVector>>,
) -> Result<AveragedTable, AveragingError> {
    let derivs = derivative_tables(&g)?;
    let ytilde = ytilde_jets
        .iter()
        .map(|y| y.map_coeffs(|c| c.constant_terms()))
        .collect();
    Ok(AveragedTable {
        base_point,
        order: g.len(),
        period,
        jets: g,
        derivs,
        ytilde,
        ytilde_jets,
    })
}
