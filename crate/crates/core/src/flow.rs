//! Integration of `x' = Σ εⁱ Fᵢ(t, x)` over the ε-graded series algebra.
//!
//! The state is seeded with `z₀ + δz` and integrated to the period `T`; the
//! ε-coefficients of `x(T) − (z₀ + δz)` are the Melnikov functions, with
//! their spatial derivatives carried in the δz series.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numeric::Numeric;
use crate::sysdsl::{eval_ast, EvalError, SystemSpec};
use crate::tpsa::{extract_multilinear, Elementary, MultilinearMap, SeriesError, SeriesVector, TruncatedSeries};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FlowError {
    #[error("non-finite value at integration step {step} of {steps}")]
    NonFinite { step: usize, steps: usize },
    #[error("field evaluation failed: {0}")]
    Eval(#[from] EvalError),
    #[error("step count must be at least 1")]
    NoSteps,
    #[error("base point has {got} coordinates, system dimension is {dim}")]
    Dimension { got: usize, dim: usize },
    #[error(transparent)]
    Series(#[from] SeriesError),
}

/// `Σ_{i=0}^{len-1} εⁱ aᵢ` with each `aᵢ` a δz series; products drop powers
/// of ε beyond the stored length.
#[derive(Debug, Clone, PartialEq)]
pub struct EpsSeries {
    terms: Vec<TruncatedSeries>,
}

impl EpsSeries {
    pub fn new(terms: Vec<TruncatedSeries>) -> Self {
        assert!(!terms.is_empty(), "graded element needs an ε⁰ term");
        EpsSeries { terms }
    }

    /// `value` at ε⁰, zero elsewhere, graded up to `eps_order`.
    pub fn from_series(value: TruncatedSeries, eps_order: usize) -> Self {
        let zero = value.constant_like(0.0);
        let mut terms = vec![zero; eps_order + 1];
        terms[0] = value;
        EpsSeries { terms }
    }

    pub fn eps_order(&self) -> usize {
        self.terms.len() - 1
    }

    pub fn term(&self, power: usize) -> &TruncatedSeries {
        &self.terms[power]
    }

    pub fn terms(&self) -> &[TruncatedSeries] {
        &self.terms
    }

    /// Keeps powers `0..=order` of ε.
    pub fn truncate_eps(&self, order: usize) -> Self {
        EpsSeries {
            terms: self.terms[..=order.min(self.eps_order())].to_vec(),
        }
    }

    /// Multiplies by `ε^shift` and truncates at `eps_order`.
    pub fn shift_eps(&self, shift: usize, eps_order: usize) -> Self {
        let zero = self.terms[0].constant_like(0.0);
        let terms = (0..=eps_order)
            .map(|p| {
                if p >= shift && p - shift < self.terms.len() {
                    self.terms[p - shift].clone()
                } else {
                    zero.clone()
                }
            })
            .collect();
        EpsSeries { terms }
    }

    pub fn is_finite(&self) -> bool {
        self.terms.iter().all(TruncatedSeries::is_finite)
    }

    fn zip_with(&self, other: &Self, f: impl Fn(&TruncatedSeries, &TruncatedSeries) -> TruncatedSeries) -> Self {
        assert_eq!(self.terms.len(), other.terms.len(), "ε-orders must agree");
        EpsSeries {
            terms: self.terms.iter().zip(&other.terms).map(|(a, b)| f(a, b)).collect(),
        }
    }

    fn compose(&self, func: Elementary) -> Self {
        // f(a₀ + ν) = Σ_q f⁽q⁾(a₀) νᵠ / q!, ν = a − a₀ has ε-valuation ≥ 1
        let k = self.eps_order();
        let base = &self.terms[0];
        let zero = base.constant_like(0.0);
        let mut nu = self.clone();
        nu.terms[0] = zero.clone();
        let mut out = EpsSeries::from_series(base.compose(func), k);
        if k == 0 {
            return out;
        }
        let mut power = nu.clone();
        let mut factorial = 1.0;
        for q in 1..=k {
            if q > 1 {
                power = power.times(&nu);
            }
            factorial *= q as f64;
            let derivative = match (func, q % 4) {
                (Elementary::Exp, _) => base.compose(Elementary::Exp),
                (Elementary::Sin, 1) | (Elementary::Cos, 0) => base.compose(Elementary::Cos),
                (Elementary::Sin, 2) | (Elementary::Cos, 1) => -&base.compose(Elementary::Sin),
                (Elementary::Sin, 3) | (Elementary::Cos, 2) => -&base.compose(Elementary::Cos),
                _ => base.compose(Elementary::Sin),
            }
            .scale(1.0 / factorial);
            // only ε-powers ≥ q of νᵠ are nonzero
            for p in q..=k {
                let add = &derivative * &power.terms[p];
                out.terms[p] = &out.terms[p] + &add;
            }
        }
        out
    }
}

impl Numeric for EpsSeries {
    fn lift(&self, c: f64) -> Self {
        EpsSeries::from_series(self.terms[0].constant_like(c), self.eps_order())
    }
    fn plus(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a + b)
    }
    fn minus(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a - b)
    }
    fn times(&self, other: &Self) -> Self {
        let k = self.eps_order();
        assert_eq!(k, other.eps_order(), "ε-orders must agree");
        let mut terms: Vec<TruncatedSeries> = Vec::with_capacity(k + 1);
        for p in 0..=k {
            let mut acc = self.terms[0].constant_like(0.0);
            for i in 0..=p {
                let (a, b) = (&self.terms[i], &other.terms[p - i]);
                if a.is_zero() || b.is_zero() {
                    continue;
                }
                acc = &acc + &(a * b);
            }
            terms.push(acc);
        }
        EpsSeries { terms }
    }
    fn scaled(&self, c: f64) -> Self {
        EpsSeries {
            terms: self.terms.iter().map(|t| t.scale(c)).collect(),
        }
    }
    fn shifted(&self, c: f64) -> Self {
        let mut out = self.clone();
        out.terms[0] = out.terms[0].add_constant(c);
        out
    }
    fn sin(&self) -> Self {
        self.compose(Elementary::Sin)
    }
    fn cos(&self) -> Self {
        self.compose(Elementary::Cos)
    }
    fn exp(&self) -> Self {
        self.compose(Elementary::Exp)
    }
    fn real_part(&self) -> f64 {
        self.terms[0].constant_term()
    }
}

/// The flow state: one graded element per state component.
#[derive(Debug, Clone, PartialEq)]
pub struct EpsGradedState {
    pub components: Vec<EpsSeries>,
}

impl EpsGradedState {
    /// `z₀ + δz` at ε⁰.
    pub fn seed(z0: &[f64], spatial_order: usize, eps_order: usize) -> Self {
        let ids = SeriesVector::identity_at(z0, spatial_order);
        EpsGradedState {
            components: ids.0.into_iter().map(|s| EpsSeries::from_series(s, eps_order)).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn eps_order(&self) -> usize {
        self.components[0].eps_order()
    }

    /// The εⁱ coefficient of every component.
    pub fn level(&self, power: usize) -> SeriesVector {
        SeriesVector(self.components.iter().map(|c| c.term(power).clone()).collect())
    }

    pub fn is_finite(&self) -> bool {
        self.components.iter().all(EpsSeries::is_finite)
    }
}

/// `Σᵢ εⁱ Fᵢ(t, x)` with each `Fᵢ` evaluated on `x` truncated to ε-order
/// `k − i`, then shifted up by `i`.
pub fn graded_rhs(system: &SystemSpec, t: f64, x: &EpsGradedState) -> Result<EpsGradedState, FlowError> {
    let k = x.eps_order();
    let proto = x.components[0].term(0).constant_like(0.0);
    let mut out: Vec<EpsSeries> = (0..x.dim()).map(|_| EpsSeries::from_series(proto.clone(), k)).collect();
    for (&level, exprs) in &system.fields {
        if level > k {
            continue;
        }
        let truncated: Vec<EpsSeries> = x.components.iter().map(|c| c.truncate_eps(k - level)).collect();
        for (slot, e) in out.iter_mut().zip(exprs) {
            if e.is_zero_constant() {
                continue;
            }
            let value = eval_ast(e, t, &truncated)?;
            *slot = slot.plus(&value.shift_eps(level, k));
        }
    }
    Ok(EpsGradedState { components: out })
}

/// `y + h·Σ wⱼ kⱼ` for a state made of [`Numeric`] components.
fn axpy<A: Numeric>(y: &[A], h: f64, k: &[A]) -> Vec<A> {
    y.iter().zip(k).map(|(a, b)| a.plus(&b.scaled(h))).collect()
}

/// Classical fixed-step fourth-order Runge–Kutta over any [`Numeric`] state.
/// `check` is called after every step and may abort the integration.
pub fn rk4<A, F, C>(
    mut rhs: F,
    x0: Vec<A>,
    t0: f64,
    t1: f64,
    steps: usize,
    mut check: C,
) -> Result<Vec<A>, FlowError>
where
    A: Numeric,
    F: FnMut(f64, &[A]) -> Result<Vec<A>, FlowError>,
    C: FnMut(usize, &[A]) -> Result<(), FlowError>,
{
    if steps == 0 {
        return Err(FlowError::NoSteps);
    }
    let h = (t1 - t0) / steps as f64;
    let mut x = x0;
    for step in 0..steps {
        let t = t0 + step as f64 * h;
        let k1 = rhs(t, &x)?;
        let k2 = rhs(t + 0.5 * h, &axpy(&x, 0.5 * h, &k1))?;
        let k3 = rhs(t + 0.5 * h, &axpy(&x, 0.5 * h, &k2))?;
        let k4 = rhs(t + h, &axpy(&x, h, &k3))?;
        x = x
            .iter()
            .zip(k1.iter().zip(&k2).zip(k3.iter().zip(&k4)))
            .map(|(xi, ((a, b), (c, d)))| {
                let incr = a.plus(&b.scaled(2.0)).plus(&c.scaled(2.0)).plus(d);
                xi.plus(&incr.scaled(h / 6.0))
            })
            .collect();
        check(step + 1, &x)?;
    }
    Ok(x)
}

/// ε-coefficients of the displacement map and their derivative tensors at a
/// base point. Levels are one-based: `f(1)` is `f₁`.
#[derive(Debug, Clone, PartialEq)]
pub struct MelnikovTable {
    pub base_point: Vec<f64>,
    pub order: usize,
    pub period: f64,
    /// δz series of `fᵢ` around the base point, index `i − 1`.
    pub jets: Vec<SeriesVector>,
    /// `derivs[i − 1][m]` is `dᵐfᵢ(z)` for `m` up to the jet order.
    pub derivs: Vec<Vec<MultilinearMap>>,
}

impl MelnikovTable {
    /// Assembles a table from δz series, extracting every `dᵐfᵢ` the series carry.
    pub fn from_jets(base_point: Vec<f64>, period: f64, jets: Vec<SeriesVector>) -> Result<Self, SeriesError> {
        let order = jets.len();
        let derivs = derivative_tables(&jets)?;
        Ok(MelnikovTable {
            base_point,
            order,
            period,
            jets,
            derivs,
        })
    }

    pub fn f(&self, level: usize) -> &[f64] {
        self.derivs[level - 1][0].value()
    }

    pub fn deriv(&self, level: usize, arity: usize) -> &MultilinearMap {
        &self.derivs[level - 1][arity]
    }

    pub fn values(&self) -> Vec<Vec<f64>> {
        (1..=self.order).map(|i| self.f(i).to_vec()).collect()
    }
}

pub(crate) fn derivative_tables(jets: &[SeriesVector]) -> Result<Vec<Vec<MultilinearMap>>, SeriesError> {
    jets.iter()
        .map(|jet| {
            (0..=jet.max_order())
                .map(|m| extract_multilinear(jet.components(), m))
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowOptions {
    /// Highest ε-power kept (`k`).
    pub eps_order: usize,
    /// Truncation order of the δz series.
    pub spatial_order: usize,
    pub steps: usize,
}

impl FlowOptions {
    /// `k` from the system, `d = k − 1`, 2000 steps.
    pub fn for_system(system: &SystemSpec) -> Self {
        FlowOptions {
            eps_order: system.order,
            spatial_order: system.order.saturating_sub(1),
            steps: 2000,
        }
    }
}

pub const DEFAULT_STEPS: usize = 2000;

/// Integrates the graded flow from `z₀ + δz` over one period and returns the
/// Melnikov table `f₁..f_k`.
pub fn integrate_displacement(
    system: &SystemSpec,
    z0: &[f64],
    options: FlowOptions,
) -> Result<MelnikovTable, FlowError> {
    if z0.len() != system.dim {
        return Err(FlowError::Dimension {
            got: z0.len(),
            dim: system.dim,
        });
    }
    let k = options.eps_order;
    let d = options.spatial_order;
    let seed = EpsGradedState::seed(z0, d, k);
    let steps = options.steps;
    let end = rk4(
        |t, x: &[EpsSeries]| {
            let state = EpsGradedState { components: x.to_vec() };
            graded_rhs(system, t, &state).map(|s| s.components)
        },
        seed.components.clone(),
        0.0,
        system.period,
        steps,
        |step, x| {
            if x.iter().all(EpsSeries::is_finite) {
                Ok(())
            } else {
                Err(FlowError::NonFinite { step, steps })
            }
        },
    )?;
    let end = EpsGradedState { components: end };
    // ε⁰ never moves (the unperturbed field is zero), so Δ has no ε⁰ part
    let jets: Vec<SeriesVector> = (1..=k).map(|i| end.level(i)).collect();
    Ok(MelnikovTable::from_jets(z0.to_vec(), system.period, jets)?)
}

/// Real-valued solution of the full system at a numeric `ε`, from `x0` over
/// one period.
pub fn simulate(system: &SystemSpec, eps: f64, x0: &[f64], steps: usize) -> Result<Vec<f64>, FlowError> {
    flow_map(system, eps, x0.to_vec(), steps)
}

/// Time-`T` map at numeric `ε` over any algebra (reals for values, order-1
/// series for the Jacobian).
pub fn flow_map<A: Numeric>(system: &SystemSpec, eps: f64, x0: Vec<A>, steps: usize) -> Result<Vec<A>, FlowError> {
    rk4(
        |t, x: &[A]| {
            let mut out: Vec<A> = x.iter().map(|c| c.lift(0.0)).collect();
            for (&level, exprs) in &system.fields {
                let w = eps.powi(level as i32);
                for (slot, e) in out.iter_mut().zip(exprs) {
                    *slot = slot.plus(&eval_ast(e, t, x)?.scaled(w));
                }
            }
            Ok(out)
        },
        x0,
        0.0,
        system.period,
        steps,
        |step, x| {
            if x.iter().all(|c| c.real_part().is_finite()) {
                Ok(())
            } else {
                Err(FlowError::NonFinite { step, steps })
            }
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn scalar_system(order: usize, fields: &[(usize, &[&str])], period: &str) -> SystemSpec {
        SystemSpec::from_sources("test", 1, period, order, fields).unwrap()
    }

    #[test]
    fn zero_field_has_zero_displacement() {
        let s = SystemSpec::from_sources("zero", 2, "2*pi", 3, &[]).unwrap();
        let table = integrate_displacement(&s, &[0.3, -0.2], FlowOptions { eps_order: 3, spatial_order: 2, steps: 10 }).unwrap();
        for i in 1..=3 {
            assert!(table.jets[i - 1].components().iter().all(TruncatedSeries::is_zero));
        }
    }

    #[test]
    fn linear_field_matches_exponential() {
        let a = 0.7;
        let s = scalar_system(4, &[(1, &["0.7*x1"])], "2*pi");
        let z = 1.3;
        let table = integrate_displacement(&s, &[z], FlowOptions { eps_order: 4, spatial_order: 3, steps: 500 }).unwrap();
        let at = a * s.period;
        let mut fact = 1.0;
        for i in 1..=4 {
            fact *= i as f64;
            let expected = z * at.powi(i as i32) / fact;
            assert_relative_eq!(table.f(i)[0], expected, max_relative = 1e-12);
            // the field is linear, so dfᵢ = fᵢ / z
            assert_relative_eq!(table.deriv(i, 1).entry(&[0])[0], expected / z, max_relative = 1e-12);
        }
    }

    #[test]
    fn grading_shift_of_constant_field() {
        let s = scalar_system(1, &[(1, &["2.5"])], "1");
        let x = EpsGradedState::seed(&[0.4], 0, 1);
        let r = graded_rhs(&s, 0.0, &x).unwrap();
        assert_eq!(r.components[0].term(0).constant_term(), 0.0);
        assert_eq!(r.components[0].term(1).constant_term(), 2.5);
    }

    #[test]
    fn top_order_terms_are_discarded() {
        // an ε^k input times the ε¹ field overflows the grading
        let s = scalar_system(2, &[(1, &["x1"])], "1");
        let mut x = EpsGradedState::seed(&[0.0], 0, 2);
        x.components[0].terms[0] = TruncatedSeries::constant(1, 0, 0.0);
        x.components[0].terms[2] = TruncatedSeries::constant(1, 0, 5.0);
        let r = graded_rhs(&s, 0.0, &x).unwrap();
        assert!(r.components[0].terms().iter().all(TruncatedSeries::is_zero));
    }

    #[test]
    fn graded_rhs_matches_direct_evaluation() {
        // evaluate the graded rhs at δz = 0 and a small ε, compare with the
        // field evaluated at the perturbed real state
        let s = SystemSpec::from_sources(
            "mix",
            2,
            "2*pi",
            3,
            &[(1, &["sin(x1)*cos(t)", "x1*x2"]), (2, &["exp(x2)", "x1^2 - t"]), (3, &["x2", "1"])],
        )
        .unwrap();
        let t = 0.37;
        let eps: f64 = 1e-3;
        let mut x = EpsGradedState::seed(&[0.2, -0.5], 0, 3);
        // x = x0 + ε u + ε² v
        let u = [0.3, 0.7];
        let v = [-0.4, 0.1];
        for c in 0..2 {
            x.components[c].terms[1] = TruncatedSeries::constant(2, 0, u[c]);
            x.components[c].terms[2] = TruncatedSeries::constant(2, 0, v[c]);
        }
        let r = graded_rhs(&s, t, &x).unwrap();
        let xr: Vec<f64> = (0..2).map(|c| [0.2, -0.5][c] + eps * u[c] + eps * eps * v[c]).collect();
        for c in 0..2 {
            let graded: f64 = (0..=3).map(|p| eps.powi(p as i32) * r.components[c].term(p).constant_term()).sum();
            let direct: f64 = (1..=3).map(|i| eps.powi(i as i32) * s.eval_field(i, t, &xr).unwrap()[c]).sum();
            assert!((graded - direct).abs() < 10.0 * eps.powi(4), "{graded} vs {direct}");
        }
    }

    #[test]
    fn first_melnikov_is_time_average() {
        // f₁(z) = ∫₀ᵀ F₁(t, z) dt; for F₁ = (1 + sin t)·x1² the integral is 2π z²
        let s = scalar_system(1, &[(1, &["(1 + sin(t))*x1^2"])], "2*pi");
        let table = integrate_displacement(&s, &[0.8], FlowOptions { eps_order: 1, spatial_order: 0, steps: 200 }).unwrap();
        assert_relative_eq!(table.f(1)[0], 2.0 * std::f64::consts::PI * 0.64, max_relative = 1e-12);
    }

    #[test]
    fn blow_up_reports_step() {
        let s = scalar_system(1, &[(1, &["exp(exp(exp(x1)))"])], "1");
        let err = simulate(&s, 1.0, &[3.0], 10).unwrap_err();
        assert!(matches!(err, FlowError::NonFinite { step: 1, steps: 10 }));
    }

    #[test]
    fn eps_zero_level_stays_fixed() {
        let s = scalar_system(2, &[(1, &["sin(x1)*cos(t)"]), (2, &["x1^3"])], "2*pi");
        let seed = EpsGradedState::seed(&[0.5], 1, 2);
        let end = rk4(
            |t, x: &[EpsSeries]| graded_rhs(&s, t, &EpsGradedState { components: x.to_vec() }).map(|s| s.components),
            seed.components.clone(),
            0.0,
            s.period,
            50,
            |_, _| Ok(()),
        )
        .unwrap();
        assert_eq!(end[0].term(0), seed.components[0].term(0));
    }

    #[test]
    fn graded_exp_matches_series_exp() {
        // with ε-order 0 the graded element is just its series
        let s = TruncatedSeries::variable(1, 3, 0, 0.3).unwrap();
        let e = EpsSeries::from_series(s.clone(), 0).exp();
        assert_eq!(e.term(0), &s.exp());
        // exp(a + ε b) = exp(a)(1 + ε b + ε² b²/2)
        let b = TruncatedSeries::constant(1, 3, 0.5);
        let g = EpsSeries::new(vec![s.clone(), b.clone(), s.constant_like(0.0)]).exp();
        let ea = s.exp();
        assert_eq!(g.term(1), &(&ea * &b));
        let expect2 = (&ea * &(&b * &b)).scale(0.5);
        for ((_, x), (_, y)) in g.term(2).terms().zip(expect2.terms()) {
            assert!((x - y).abs() < 1e-15);
        }
    }
}
