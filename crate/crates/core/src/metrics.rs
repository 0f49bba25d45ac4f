//! Distances between distributions on a shared grid and the ambiguity-set
//! specification built on them.
//!
//! For two piecewise linear cdfs on the same knots the difference `G = F_P − F_Q`
//! is linear on every segment, so `∫|G|` is a sum of per-segment areas. When
//! `G` keeps its sign on a segment the area is a trapezoid. When it changes
//! sign it is two triangles, `(a² + b²)/(|a| + |b|)` times half the width.
//!
//! Ambiguity balls are restricted to alternatives on the reference's own
//! knots (or atoms). Measures with extra knots are outside the model.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{DiscretePmf, Measure, PiecewiseLinearCdf};

/// Slack for weak stochastic-dominance comparisons.
pub const DOMINANCE_TOL: f64 = 1e-9;
/// Ball membership slack.
pub const MEMBERSHIP_TOL: f64 = 1e-9;

/// Neighborhood of the reference measure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AmbiguitySetSpec {
    /// Cdfs within `∫|F_P − F_Q̂| ≤ δ`.
    Wasserstein { delta: f64 },
    /// Pmfs with `D_α(P‖Q̂) ≤ δ`.
    Renyi { alpha: f64, delta: f64 },
}

impl AmbiguitySetSpec {
    pub fn validate(&self) -> Result<()> {
        let d = self.radius();
        if !(d >= 0.0 && d.is_finite()) {
            return Err(Error::invalid("ambiguity radius must be finite and >= 0"));
        }
        if let AmbiguitySetSpec::Renyi { alpha, .. } = *self {
            if !(alpha > 1.0 && alpha.is_finite()) {
                return Err(Error::invalid("Renyi order must exceed 1"));
            }
        }
        Ok(())
    }

    pub fn radius(&self) -> f64 {
        match *self {
            AmbiguitySetSpec::Wasserstein { delta } | AmbiguitySetSpec::Renyi { delta, .. } => {
                delta
            }
        }
    }

    pub fn with_radius(&self, delta: f64) -> Self {
        match *self {
            AmbiguitySetSpec::Wasserstein { .. } => AmbiguitySetSpec::Wasserstein { delta },
            AmbiguitySetSpec::Renyi { alpha, .. } => AmbiguitySetSpec::Renyi { alpha, delta },
        }
    }

    /// `δ̄ = exp(δ(α − 1))` for Rényi balls; `None` for Wasserstein.
    pub fn renyi_bound(&self) -> Option<f64> {
        match *self {
            AmbiguitySetSpec::Renyi { alpha, delta } => Some((delta * (alpha - 1.0)).exp()),
            AmbiguitySetSpec::Wasserstein { .. } => None,
        }
    }

    /// Distance used to detect repeated priors: the Wasserstein distance, or
    /// the larger of the two Rényi divergences (infinite when neither measure
    /// is absolutely continuous with respect to the other).
    pub fn distance(&self, a: &Measure, b: &Measure) -> Result<f64> {
        match (*self, a, b) {
            (AmbiguitySetSpec::Wasserstein { .. }, Measure::Cdf(fa), Measure::Cdf(fb)) => {
                wasserstein_pwl(fa, fb)
            }
            (AmbiguitySetSpec::Renyi { alpha, .. }, Measure::Pmf(pa), Measure::Pmf(pb)) => {
                let ab = renyi_divergence(pa, pb, alpha).unwrap_or(f64::INFINITY);
                let ba = renyi_divergence(pb, pa, alpha).unwrap_or(f64::INFINITY);
                Ok(ab.max(ba))
            }
            _ => Err(Error::invalid("measure kind does not match the ambiguity set")),
        }
    }

    /// Membership slack: positive inside the ball.
    pub fn ball_slack(&self, p: &Measure, reference: &Measure) -> Result<f64> {
        match (*self, p, reference) {
            (AmbiguitySetSpec::Wasserstein { delta }, Measure::Cdf(fp), Measure::Cdf(fq)) => {
                Ok(delta - wasserstein_pwl(fp, fq)?)
            }
            (AmbiguitySetSpec::Renyi { alpha, delta }, Measure::Pmf(pp), Measure::Pmf(pq)) => {
                renyi_ball_slack(pp, pq, alpha, delta)
            }
            _ => Err(Error::invalid("measure kind does not match the ambiguity set")),
        }
    }
}

/// Area factor of a segment: `|a| + |b|` when the endpoint differences share
/// a sign (including zero), `(a² + b²)/(|a| + |b|)` when they cross.
#[inline]
pub fn phi(a: f64, b: f64) -> f64 {
    if a * b >= 0.0 {
        a.abs() + b.abs()
    } else {
        (a * a + b * b) / (a.abs() + b.abs())
    }
}

/// `∫|F_P − F_Q| dx` for piecewise linear cdfs on shared knots.
pub fn wasserstein_pwl(fp: &PiecewiseLinearCdf, fq: &PiecewiseLinearCdf) -> Result<f64> {
    if !fp.same_knots(fq) {
        return Err(Error::KnotMismatch);
    }
    Ok(wasserstein_values(fp.knots(), fp.values(), fq.values()))
}

pub(crate) fn wasserstein_values(knots: &[f64], a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for i in 0..knots.len() - 1 {
        let g0 = a[i] - b[i];
        let g1 = a[i + 1] - b[i + 1];
        acc += 0.5 * (knots[i + 1] - knots[i]) * phi(g0, g1);
    }
    acc
}

/// `Σ pᵢ^α qᵢ^{1−α}` with the `0 · 0` convention; errors if `p` is not
/// absolutely continuous with respect to `q`.
pub fn renyi_moment(p: &[f64], q: &[f64], alpha: f64) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::dim("Renyi divergence needs aligned pmfs"));
    }
    let mut acc = 0.0;
    for (i, (&pi, &qi)) in p.iter().zip(q).enumerate() {
        if pi == 0.0 {
            continue;
        }
        if qi == 0.0 {
            return Err(Error::NotAbsolutelyContinuous { index: i, mass: pi });
        }
        acc += qi * (pi / qi).powf(alpha);
    }
    Ok(acc)
}

/// `D_α(P‖Q) = log(Σ pᵢ^α qᵢ^{1−α})/(α − 1)`.
pub fn renyi_divergence(p: &DiscretePmf, q: &DiscretePmf, alpha: f64) -> Result<f64> {
    if !(alpha > 1.0) {
        return Err(Error::invalid("Renyi order must exceed 1"));
    }
    let m = renyi_moment(p.weights(), q.weights(), alpha)?;
    // Rounding can push the moment a hair below 1 when p = q.
    Ok((m.ln() / (alpha - 1.0)).max(0.0))
}

/// `δ̄ − Σ pᵢ^α qᵢ^{1−α}`; `p` is in the ball iff this is `≥ −1e−9`.
pub fn renyi_ball_slack(p: &DiscretePmf, q: &DiscretePmf, alpha: f64, delta: f64) -> Result<f64> {
    if !(alpha > 1.0) {
        return Err(Error::invalid("Renyi order must exceed 1"));
    }
    let bound = (delta * (alpha - 1.0)).exp();
    Ok(bound - renyi_moment(p.weights(), q.weights(), alpha)?)
}

/// True iff `F_A ≤ F_B + 1e−9` at every grid point.
pub fn fsd_dominates(a: &Measure, b: &Measure) -> Result<bool> {
    Ok(fsd_margin(a, b)? >= -DOMINANCE_TOL)
}

/// `min (F_B − F_A)` over the grid; nonnegative under weak dominance.
pub fn fsd_margin(a: &Measure, b: &Measure) -> Result<f64> {
    if let (Measure::Cdf(fa), Measure::Cdf(fb)) = (a, b) {
        if !fa.same_knots(fb) {
            return Err(Error::KnotMismatch);
        }
    }
    if a.len() != b.len() {
        return Err(Error::KnotMismatch);
    }
    let fa = a.cdf_values();
    let fb = b.cdf_values();
    Ok(fa
        .iter()
        .zip(&fb)
        .map(|(x, y)| y - x)
        .fold(f64::INFINITY, f64::min))
}

/// Radius estimate `WD(Q̂, Q)`. Under first-order dominance this equals the
/// difference of means.
pub fn ambiguity_radius_estimate(f_qhat: &PiecewiseLinearCdf, f_q: &PiecewiseLinearCdf) -> Result<f64> {
    wasserstein_pwl(f_qhat, f_q)
}
