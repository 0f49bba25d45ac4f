//! Domain types: the loss grid, wealth parameters, utilities, the two
//! distribution representations, indemnity schedules, and the atom-wise
//! Lebesgue decomposition of one measure against another.
//!
//! Every distribution and schedule is aligned to a single [`LossGrid`].
//! Nothing here interpolates between grids; re-gridding is always explicit.
//!
//! Both distribution representations reduce to *node weights* `ω` with
//! `Σ ω = 1`, so that an expectation of a function sampled at the knots is
//! `Σ ωᵢ g(xᵢ)`. For a pmf the weights are the atoms. For a piecewise
//! linear cdf they are the trapezoid weights: the rule
//! `½ Σ (gᵢ + gᵢ₊₁)(F(xᵢ₊₁) − F(xᵢ))` regrouped per knot, plus any mass
//! `F(x₁)` sitting at the first knot.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute tolerance for probability mass.
pub const MASS_TOL: f64 = 1e-12;
/// Absolute tolerance for currency amounts in feasibility checks.
pub const CURRENCY_TOL: f64 = 1e-9;
/// Participation is considered satisfied down to this (negative) slack.
pub const PARTICIPATION_TOL: f64 = 1e-9;

/// Ordered support points `x₁ < … < xₙ` of the discretized loss on `[0, M]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossGrid {
    points: Vec<f64>,
    upper_bound: f64,
}

impl LossGrid {
    /// Sorts and removes exact duplicates, then validates.
    pub fn new(mut points: Vec<f64>, upper_bound: f64) -> Result<Self> {
        if points.iter().any(|x| !x.is_finite()) || !upper_bound.is_finite() {
            return Err(Error::invalid("grid points must be finite"));
        }
        points.sort_by(|a, b| a.total_cmp(b));
        points.dedup();
        if points.len() < 2 {
            return Err(Error::invalid("a loss grid needs at least two points"));
        }
        if points[0] < 0.0 {
            return Err(Error::invalid("losses must be nonnegative"));
        }
        if *points.last().unwrap() > upper_bound {
            return Err(Error::invalid(format!(
                "largest point {} exceeds the upper bound {upper_bound}",
                points.last().unwrap()
            )));
        }
        Ok(LossGrid { points, upper_bound })
    }

    /// `n` equally spaced knots `0 = x₁ < … < xₙ = M`.
    pub fn uniform(n: usize, upper_bound: f64) -> Result<Self> {
        if n < 2 || upper_bound <= 0.0 {
            return Err(Error::invalid("uniform grid needs n >= 2 and M > 0"));
        }
        let h = upper_bound / (n - 1) as f64;
        let mut pts: Vec<f64> = (0..n).map(|i| i as f64 * h).collect();
        pts[n - 1] = upper_bound;
        LossGrid::new(pts, upper_bound)
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn upper_bound(&self) -> f64 {
        self.upper_bound
    }

    /// Segment widths `xᵢ₊₁ − xᵢ`.
    pub fn widths(&self) -> Vec<f64> {
        difference(&self.points)
    }

    fn check_len(&self, len: usize, what: &str) -> Result<()> {
        if len != self.len() {
            return Err(Error::dim(format!(
                "{what} has length {len}, grid has {}",
                self.len()
            )));
        }
        Ok(())
    }
}

/// Wealth and pricing parameters shared by buyer and insurer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WealthConfig {
    /// Buyer's initial wealth `W₀`.
    pub w0: f64,
    /// Insurer's initial wealth `W₀^Ins`.
    pub w0_ins: f64,
    /// Premium `Π₀ > 0`.
    pub premium: f64,
    /// Safety loading `ρ ≥ 0`.
    pub loading: f64,
}

impl WealthConfig {
    pub fn new(w0: f64, w0_ins: f64, premium: f64, loading: f64) -> Result<Self> {
        let cfg = WealthConfig {
            w0,
            w0_ins,
            premium,
            loading,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.premium > 0.0) {
            return Err(Error::invalid("premium must be positive"));
        }
        if !(self.loading >= 0.0) {
            return Err(Error::invalid("loading must be nonnegative"));
        }
        Ok(())
    }

    /// Checks that every buyer and insurer wealth position reachable on
    /// `grid` lies in the closure of the utility domains.
    pub fn validate_for(&self, grid: &LossGrid, u: &UtilitySpec, v: &UtilitySpec) -> Result<()> {
        self.validate()?;
        let m = grid.upper_bound();
        if let Some(lo) = u.domain_lower() {
            if self.w0 - m - self.premium < lo {
                return Err(Error::invalid(format!(
                    "buyer wealth W0 - M - premium = {} leaves the utility domain",
                    self.w0 - m - self.premium
                )));
            }
        }
        if let Some(lo) = v.domain_lower() {
            if self.w0_ins - (1.0 + self.loading) * m + self.premium < lo {
                return Err(Error::invalid(
                    "insurer wealth after a full payout leaves the utility domain",
                ));
            }
        }
        Ok(())
    }

    /// Buyer's terminal wealth `W₀ − x + y − Π₀`.
    #[inline]
    pub fn buyer_wealth(&self, x: f64, y: f64) -> f64 {
        self.w0 - x + y - self.premium
    }

    /// Insurer's terminal wealth `W₀^Ins − (1+ρ)y + Π₀`.
    #[inline]
    pub fn insurer_wealth(&self, y: f64) -> f64 {
        self.w0_ins - (1.0 + self.loading) * y + self.premium
    }

    /// The retention budget `E_Q[X] − Π₀/(1+ρ)` for a risk-neutral insurer.
    pub fn retention_budget(&self, expected_loss: f64) -> f64 {
        expected_loss - self.premium / (1.0 + self.loading)
    }
}

/// Increasing concave utility.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum UtilitySpec {
    /// `u(x) = (1 − e^{−γx})/γ`.
    Cara { gamma: f64 },
    /// `u(x) = x^a` on `x > 0`, `0 < a < 1`.
    Power { a: f64 },
    /// `u(x) = x`.
    Linear,
}

impl UtilitySpec {
    pub fn cara(gamma: f64) -> Result<Self> {
        let u = UtilitySpec::Cara { gamma };
        u.validate()?;
        Ok(u)
    }

    pub fn power(a: f64) -> Result<Self> {
        let u = UtilitySpec::Power { a };
        u.validate()?;
        Ok(u)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            UtilitySpec::Cara { gamma } if !(gamma > 0.0 && gamma.is_finite()) => {
                Err(Error::invalid("CARA coefficient must be positive"))
            }
            UtilitySpec::Power { a } if !(a > 0.0 && a < 1.0) => {
                Err(Error::invalid("power exponent must lie in (0, 1)"))
            }
            _ => Ok(()),
        }
    }

    fn name(&self) -> &'static str {
        match self {
            UtilitySpec::Cara { .. } => "CARA",
            UtilitySpec::Power { .. } => "power",
            UtilitySpec::Linear => "linear",
        }
    }

    /// Infimum of the domain, if bounded below. Power utilities need strictly
    /// positive arguments.
    pub fn domain_lower(&self) -> Option<f64> {
        match self {
            UtilitySpec::Power { .. } => Some(0.0),
            _ => None,
        }
    }

    pub fn is_linear(&self) -> bool {
        matches!(self, UtilitySpec::Linear)
    }

    #[inline]
    fn guard(&self, x: f64) -> Result<()> {
        let ok = match self {
            UtilitySpec::Power { .. } => x > 0.0,
            _ => x.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Domain {
                utility: self.name(),
                arg: x,
            })
        }
    }

    pub fn value(&self, x: f64) -> Result<f64> {
        self.guard(x)?;
        Ok(self.value_unchecked(x))
    }

    pub fn derivative(&self, x: f64) -> Result<f64> {
        self.guard(x)?;
        Ok(self.derivative_unchecked(x))
    }

    pub fn second_derivative(&self, x: f64) -> Result<f64> {
        self.guard(x)?;
        Ok(self.second_derivative_unchecked(x))
    }

    /// `(u′)⁻¹(y)` for `y > 0`. Linear utility has no inverse derivative.
    pub fn inverse_derivative(&self, y: f64) -> Result<f64> {
        if !(y > 0.0 && y.is_finite()) {
            return Err(Error::Domain {
                utility: self.name(),
                arg: y,
            });
        }
        match *self {
            UtilitySpec::Cara { gamma } => Ok(-y.ln() / gamma),
            UtilitySpec::Power { a } => Ok((y / a).powf(1.0 / (a - 1.0))),
            UtilitySpec::Linear => Err(Error::invalid(
                "linear utility has a constant derivative with no inverse",
            )),
        }
    }

    /// `u⁻¹(v)`.
    pub fn inverse(&self, v: f64) -> Result<f64> {
        match *self {
            UtilitySpec::Cara { gamma } => {
                let s = 1.0 - gamma * v;
                if s > 0.0 {
                    Ok(-s.ln() / gamma)
                } else {
                    Err(Error::Domain {
                        utility: "CARA",
                        arg: v,
                    })
                }
            }
            UtilitySpec::Power { a } => {
                if v >= 0.0 {
                    Ok(v.powf(1.0 / a))
                } else {
                    Err(Error::Domain {
                        utility: "power",
                        arg: v,
                    })
                }
            }
            UtilitySpec::Linear => Ok(v),
        }
    }

    #[inline]
    pub(crate) fn value_unchecked(&self, x: f64) -> f64 {
        match *self {
            UtilitySpec::Cara { gamma } => -(-gamma * x).exp_m1() / gamma,
            UtilitySpec::Power { a } => x.powf(a),
            UtilitySpec::Linear => x,
        }
    }

    /// `u(x) − u(b)` without the cancellation of subtracting two values.
    #[inline]
    pub(crate) fn diff_unchecked(&self, x: f64, b: f64) -> f64 {
        match *self {
            UtilitySpec::Cara { gamma } => -(-gamma * b).exp() * (-gamma * (x - b)).exp_m1() / gamma,
            UtilitySpec::Power { a } => b.powf(a) * (a * ((x - b) / b).ln_1p()).exp_m1(),
            UtilitySpec::Linear => x - b,
        }
    }

    #[inline]
    pub(crate) fn derivative_unchecked(&self, x: f64) -> f64 {
        match *self {
            UtilitySpec::Cara { gamma } => (-gamma * x).exp(),
            UtilitySpec::Power { a } => a * x.powf(a - 1.0),
            UtilitySpec::Linear => 1.0,
        }
    }

    #[inline]
    pub(crate) fn second_derivative_unchecked(&self, x: f64) -> f64 {
        match *self {
            UtilitySpec::Cara { gamma } => -gamma * (-gamma * x).exp(),
            UtilitySpec::Power { a } => a * (a - 1.0) * x.powf(a - 2.0),
            UtilitySpec::Linear => 0.0,
        }
    }
}

/// Probability mass function aligned to a [`LossGrid`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscretePmf {
    weights: Vec<f64>,
}

impl DiscretePmf {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::invalid("empty pmf"));
        }
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::invalid("pmf weights must be finite and nonnegative"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > MASS_TOL * weights.len().max(1) as f64 {
            return Err(Error::invalid(format!("pmf sums to {total}, not 1")));
        }
        Ok(DiscretePmf { weights })
    }

    /// Rescales nonnegative weights to sum to one.
    pub fn normalized(weights: Vec<f64>) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::invalid("cannot normalize zero mass"));
        }
        DiscretePmf::new(weights.into_iter().map(|w| w / total).collect())
    }

    pub fn uniform(n: usize) -> Self {
        DiscretePmf {
            weights: vec![1.0 / n as f64; n],
        }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Cdf values at the atoms.
    pub fn cdf_values(&self) -> Vec<f64> {
        let mut acc = 0.0;
        self.weights
            .iter()
            .map(|w| {
                acc += w;
                acc
            })
            .collect()
    }
}

/// Continuous, piecewise linear cdf on shared knots. Between knots the
/// density is constant: `pᵢ = (F(xᵢ₊₁) − F(xᵢ))/(xᵢ₊₁ − xᵢ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseLinearCdf {
    knots: Vec<f64>,
    values: Vec<f64>,
}

impl PiecewiseLinearCdf {
    pub fn new(grid: &LossGrid, values: Vec<f64>) -> Result<Self> {
        grid.check_len(values.len(), "cdf")?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("cdf values must be finite"));
        }
        if values[0] < -MASS_TOL {
            return Err(Error::invalid("cdf must be nonnegative"));
        }
        if let Some(i) = (0..values.len() - 1).find(|&i| values[i + 1] < values[i] - MASS_TOL) {
            return Err(Error::invalid(format!("cdf decreases after knot {i}")));
        }
        let last = *values.last().unwrap();
        if (last - 1.0).abs() > MASS_TOL {
            return Err(Error::invalid(format!("cdf ends at {last}, not 1")));
        }
        Ok(PiecewiseLinearCdf {
            knots: grid.points().to_vec(),
            values,
        })
    }

    /// Builds the cdf from `F(x₁)` and segment densities.
    pub fn from_densities(grid: &LossGrid, first: f64, densities: &[f64]) -> Result<Self> {
        grid.check_len(densities.len() + 1, "densities (+1)")?;
        let mut values = Vec::with_capacity(grid.len());
        let mut acc = first;
        values.push(acc);
        for (p, w) in densities.iter().zip(grid.widths()) {
            acc += p * w;
            values.push(acc);
        }
        PiecewiseLinearCdf::new(grid, values)
    }

    /// Uniform distribution on `[x₁, xₙ]`.
    pub fn uniform(grid: &LossGrid) -> Self {
        let x = grid.points();
        let (a, b) = (x[0], x[x.len() - 1]);
        let mut values: Vec<f64> = x.iter().map(|&xi| (xi - a) / (b - a)).collect();
        *values.last_mut().unwrap() = 1.0;
        PiecewiseLinearCdf {
            knots: x.to_vec(),
            values,
        }
    }

    pub(crate) fn from_parts_unchecked(knots: Vec<f64>, values: Vec<f64>) -> Self {
        PiecewiseLinearCdf { knots, values }
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn segment_densities(&self) -> Vec<f64> {
        (0..self.len() - 1)
            .map(|i| (self.values[i + 1] - self.values[i]) / (self.knots[i + 1] - self.knots[i]))
            .collect()
    }

    /// Linear interpolation of the cdf; 0 left of the first knot (or `F(x₁)`
    /// at it) and 1 right of the last.
    pub fn eval(&self, x: f64) -> f64 {
        let k = &self.knots;
        if x < k[0] {
            return 0.0;
        }
        if x >= k[k.len() - 1] {
            return 1.0;
        }
        let i = k.partition_point(|&t| t <= x) - 1;
        let s = (x - k[i]) / (k[i + 1] - k[i]);
        self.values[i] + s * (self.values[i + 1] - self.values[i])
    }

    /// Mean `∫ x dF`, exact for a piecewise linear cdf (including mass at x₁).
    pub fn mean(&self) -> f64 {
        let k = &self.knots;
        let mut m = self.values[0] * k[0];
        for i in 0..k.len() - 1 {
            m += (self.values[i + 1] - self.values[i]) * 0.5 * (k[i] + k[i + 1]);
        }
        m
    }

    pub(crate) fn same_knots(&self, other: &PiecewiseLinearCdf) -> bool {
        self.knots == other.knots
    }
}

/// A probability measure on the grid in either representation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Measure {
    Pmf(DiscretePmf),
    Cdf(PiecewiseLinearCdf),
}

impl Measure {
    pub fn len(&self) -> usize {
        match self {
            Measure::Pmf(p) => p.len(),
            Measure::Cdf(f) => f.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Weights `ω` with `E[g(X)] = Σ ωᵢ g(xᵢ)` (trapezoid rule for cdfs).
    pub fn node_weights(&self) -> Vec<f64> {
        match self {
            Measure::Pmf(p) => p.weights().to_vec(),
            Measure::Cdf(f) => cdf_node_weights(f.values()),
        }
    }

    /// Cdf values at the grid points.
    pub fn cdf_values(&self) -> Vec<f64> {
        match self {
            Measure::Pmf(p) => p.cdf_values(),
            Measure::Cdf(f) => f.values().to_vec(),
        }
    }

    pub fn as_pmf(&self) -> Option<&DiscretePmf> {
        match self {
            Measure::Pmf(p) => Some(p),
            Measure::Cdf(_) => None,
        }
    }

    pub fn as_cdf(&self) -> Option<&PiecewiseLinearCdf> {
        match self {
            Measure::Cdf(f) => Some(f),
            Measure::Pmf(_) => None,
        }
    }

    /// `E[X]` in the measure's own quadrature.
    pub fn expected_loss(&self, grid: &LossGrid) -> f64 {
        dot(&self.node_weights(), grid.points())
    }

    /// Convex combination `Σ wₖ μₖ` of measures of one kind.
    pub fn mixture(measures: &[Measure], weights: &[f64]) -> Result<Measure> {
        if measures.is_empty() || measures.len() != weights.len() {
            return Err(Error::dim("mixture needs one weight per measure"));
        }
        let total: f64 = weights.iter().sum();
        let n = measures[0].len();
        let mut acc = vec![0.0; n];
        for (m, &w) in measures.iter().zip(weights) {
            if m.len() != n {
                return Err(Error::dim("mixture of measures on different grids"));
            }
            let vals = match m {
                Measure::Pmf(p) => p.weights().to_vec(),
                Measure::Cdf(f) => f.values().to_vec(),
            };
            for (a, v) in acc.iter_mut().zip(vals) {
                *a += w / total * v;
            }
        }
        match &measures[0] {
            Measure::Pmf(_) => {
                if measures.iter().any(|m| m.as_pmf().is_none()) {
                    return Err(Error::invalid("mixture of pmfs and cdfs"));
                }
                Ok(Measure::Pmf(DiscretePmf::normalized(acc)?))
            }
            Measure::Cdf(f0) => {
                if measures.iter().any(|m| m.as_cdf().is_none()) {
                    return Err(Error::invalid("mixture of pmfs and cdfs"));
                }
                *acc.last_mut().unwrap() = 1.0;
                Ok(Measure::Cdf(PiecewiseLinearCdf::from_parts_unchecked(
                    f0.knots().to_vec(),
                    acc,
                )))
            }
        }
    }
}

/// Trapezoid node weights of a piecewise linear cdf given its knot values.
pub(crate) fn cdf_node_weights(f: &[f64]) -> Vec<f64> {
    let n = f.len();
    let mut w = vec![0.0; n];
    w[0] = f[0] + 0.5 * (f[1] - f[0]);
    for j in 1..n - 1 {
        w[j] = 0.5 * (f[j + 1] - f[j - 1]);
    }
    w[n - 1] = 0.5 * (f[n - 1] - f[n - 2]);
    w
}

/// Which admissible indemnity set a schedule belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FeasibilityClass {
    /// `0 ≤ y ≤ x`.
    #[serde(rename = "I")]
    Basic,
    /// Additionally `0 ≤ yᵢ₊₁ − yᵢ ≤ xᵢ₊₁ − xᵢ` (no sabotage).
    #[serde(rename = "I_hat")]
    NoSabotage,
}

/// Indemnity values on the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndemnitySchedule {
    values: Vec<f64>,
    class: FeasibilityClass,
}

impl IndemnitySchedule {
    /// Wraps values without checking feasibility; see [`check_feasible`].
    pub fn from_values(values: Vec<f64>, class: FeasibilityClass) -> Self {
        IndemnitySchedule { values, class }
    }

    /// Wraps values and rejects them unless they are feasible for `class`.
    pub fn validated(grid: &LossGrid, values: Vec<f64>, class: FeasibilityClass) -> Result<Self> {
        let s = IndemnitySchedule { values, class };
        let report = check_feasible(&s, grid, class)?;
        match report.violation {
            None => Ok(s),
            Some(v) => Err(Error::invalid(format!("infeasible schedule: {v:?}"))),
        }
    }

    pub fn zero(grid: &LossGrid, class: FeasibilityClass) -> Self {
        IndemnitySchedule::from_values(vec![0.0; grid.len()], class)
    }

    pub fn full(grid: &LossGrid, class: FeasibilityClass) -> Self {
        IndemnitySchedule::from_values(grid.points().to_vec(), class)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn class(&self) -> FeasibilityClass {
        self.class
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Retention `r = x − y`.
    pub fn retention(&self, grid: &LossGrid) -> Vec<f64> {
        grid.points()
            .iter()
            .zip(&self.values)
            .map(|(x, y)| x - y)
            .collect()
    }
}

/// First differences `v[i+1] − v[i]`.
pub fn difference_matrix_apply(v: &[f64]) -> Result<Vec<f64>> {
    if v.len() < 2 {
        return Err(Error::dim("difference needs at least two entries"));
    }
    Ok(difference(v))
}

pub(crate) fn difference(v: &[f64]) -> Vec<f64> {
    v.windows(2).map(|w| w[1] - w[0]).collect()
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintKind {
    /// `yᵢ ≥ 0`.
    Nonnegative,
    /// `yᵢ ≤ xᵢ`.
    BoundedByLoss,
    /// `yᵢ₊₁ − yᵢ ≥ 0`.
    Nondecreasing,
    /// `yᵢ₊₁ − yᵢ ≤ xᵢ₊₁ − xᵢ`.
    Lipschitz,
}

/// First violated constraint: its kind, 0-based index (atom for bounds,
/// segment for increments), and (negative) slack.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Violation {
    pub kind: ConstraintKind,
    pub index: usize,
    pub slack: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeasibilityReport {
    pub violation: Option<Violation>,
    /// Smallest slack over all checked constraints.
    pub min_slack: f64,
}

impl FeasibilityReport {
    pub fn feasible(&self) -> bool {
        self.violation.is_none()
    }
}

/// Checks `y` against the constraints of `class` with currency tolerance.
pub fn check_feasible(
    y: &IndemnitySchedule,
    grid: &LossGrid,
    class: FeasibilityClass,
) -> Result<FeasibilityReport> {
    grid.check_len(y.len(), "schedule")?;
    let x = grid.points();
    let v = y.values();
    let mut min_slack = f64::INFINITY;
    let mut violation = None;
    let mut visit = |kind, index, slack: f64| {
        min_slack = min_slack.min(slack);
        if violation.is_none() && slack < -CURRENCY_TOL {
            violation = Some(Violation { kind, index, slack });
        }
    };
    for i in 0..x.len() {
        visit(ConstraintKind::Nonnegative, i, v[i]);
        visit(ConstraintKind::BoundedByLoss, i, x[i] - v[i]);
    }
    if class == FeasibilityClass::NoSabotage {
        for i in 0..x.len() - 1 {
            let dy = v[i + 1] - v[i];
            visit(ConstraintKind::Nondecreasing, i, dy);
            visit(ConstraintKind::Lipschitz, i, (x[i + 1] - x[i]) - dy);
        }
    }
    Ok(FeasibilityReport {
        violation,
        min_slack,
    })
}

/// Atom-wise split of `p` against a reference `q`.
#[derive(Debug, Clone, PartialEq)]
pub struct DecomposedMeasure {
    /// `p` restricted to `A = {q > 0}`.
    pub ac_part: Vec<f64>,
    /// `p` restricted to the complement of `A`.
    pub singular_part: Vec<f64>,
    /// `A = {i : qᵢ > 0}`.
    pub ac_mask: Vec<bool>,
    /// `h*ᵢ = pᵢ/qᵢ` on `A`, and 0 off `A`.
    pub density: Vec<f64>,
}

impl DecomposedMeasure {
    /// Indices in `A` where the density vanishes.
    pub fn null_density_set(&self) -> Vec<usize> {
        (0..self.density.len())
            .filter(|&i| self.ac_mask[i] && self.density[i] == 0.0)
            .collect()
    }
}

pub fn lebesgue_decompose(p: &DiscretePmf, q: &DiscretePmf) -> Result<DecomposedMeasure> {
    lebesgue_decompose_weights(p.weights(), q.weights())
}

/// Same split on raw weight vectors, e.g. node weights of cdfs.
pub fn lebesgue_decompose_weights(p: &[f64], q: &[f64]) -> Result<DecomposedMeasure> {
    if p.len() != q.len() {
        return Err(Error::dim("decomposition needs aligned supports"));
    }
    let ac_mask: Vec<bool> = q.iter().map(|&qi| qi > 0.0).collect();
    let ac_part: Vec<f64> = p
        .iter()
        .zip(&ac_mask)
        .map(|(&pi, &a)| if a { pi } else { 0.0 })
        .collect();
    let singular_part = p.iter().zip(&ac_part).map(|(pi, ai)| pi - ai).collect();
    let density = p
        .iter()
        .zip(q)
        .map(|(&pi, &qi)| if qi > 0.0 { pi / qi } else { 0.0 })
        .collect();
    Ok(DecomposedMeasure {
        ac_part,
        singular_part,
        ac_mask,
        density,
    })
}

/// `u(W₀ − xᵢ + yᵢ − Π₀)` at every knot.
pub fn node_utilities(
    y: &[f64],
    grid: &LossGrid,
    cfg: &WealthConfig,
    u: &UtilitySpec,
) -> Result<Vec<f64>> {
    grid.check_len(y.len(), "schedule")?;
    grid.points()
        .iter()
        .zip(y)
        .map(|(&x, &yi)| u.value(cfg.buyer_wealth(x, yi)))
        .collect()
}

/// The buyer's expected utility of `y` under `p`: an exact sum for pmfs and
/// the trapezoid rule for piecewise linear cdfs.
pub fn dm_objective(
    y: &IndemnitySchedule,
    p: &Measure,
    grid: &LossGrid,
    cfg: &WealthConfig,
    u: &UtilitySpec,
) -> Result<f64> {
    grid.check_len(p.len(), "measure")?;
    let util = node_utilities(y.values(), grid, cfg, u)?;
    Ok(dot(&p.node_weights(), &util))
}

/// `E_Q[v(W₀^Ins − (1+ρ)y + Π₀)] − v(W₀^Ins)`; feasible iff `≥ −1e−9`.
pub fn insurer_participation_slack(
    y: &IndemnitySchedule,
    grid: &LossGrid,
    cfg: &WealthConfig,
    v: &UtilitySpec,
    q: &Measure,
) -> Result<f64> {
    grid.check_len(y.len(), "schedule")?;
    grid.check_len(q.len(), "measure")?;
    let w = q.node_weights();
    let mut acc = 0.0;
    for (wi, &yi) in w.iter().zip(y.values()) {
        acc += wi * v.value(cfg.insurer_wealth(yi))?;
    }
    Ok(acc - v.value(cfg.w0_ins)?)
}
