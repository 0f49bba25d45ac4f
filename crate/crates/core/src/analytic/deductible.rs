use super::ContractForm;
use crate::error::{Error, Result};
use crate::linalg::bisect;
use crate::model::{LossGrid, Measure, WealthConfig};

const DEDUCTIBLE_TOL: f64 = 1e-10;

/// Stop-loss premium `E[(X − d)⁺]`. Exact for both representations: a sum
/// over atoms for pmfs, and per-segment quadratic integrals for piecewise
/// linear cdfs (with the mass `F(x₁)` sitting at `x₁`).
pub fn stop_loss(measure: &Measure, grid: &LossGrid, d: f64) -> Result<f64> {
    if measure.len() != grid.len() {
        return Err(Error::dim("measure is not on the loss grid"));
    }
    let x = grid.points();
    Ok(match measure {
        Measure::Pmf(p) => p
            .weights()
            .iter()
            .zip(x)
            .map(|(w, xi)| w * (xi - d).max(0.0))
            .sum(),
        Measure::Cdf(f) => {
            let v = f.values();
            let mut acc = v[0] * (x[0] - d).max(0.0);
            for i in 0..x.len() - 1 {
                let (a, b) = (x[i], x[i + 1]);
                let mass = v[i + 1] - v[i];
                acc += if d <= a {
                    mass * (0.5 * (a + b) - d)
                } else if d < b {
                    mass * (b - d) * (b - d) / (2.0 * (b - a))
                } else {
                    0.0
                };
            }
            acc
        }
    })
}

/// Deductible that exhausts the premium under the reference measure:
/// `(1+ρ)E_Q[(X − d)⁺] = Π₀`. Falls back to full insurance when the premium
/// covers the whole actuarial cost.
pub fn solve_deductible(reference: &Measure, grid: &LossGrid, cfg: &WealthConfig) -> Result<ContractForm> {
    cfg.validate()?;
    let load = 1.0 + cfg.loading;
    let cost = |d: f64| stop_loss(reference, grid, d).map(|s| load * s - cfg.premium);
    let at_zero = cost(0.0)?;
    if at_zero < 0.0 {
        return Ok(ContractForm::FullInsurance);
    }
    if at_zero == 0.0 {
        return Ok(ContractForm::Deductible { d: 0.0 });
    }
    let m = grid.upper_bound();
    let (lo, hi) = bisect(
        |d| cost(d).unwrap_or(f64::NAN),
        0.0,
        m,
        DEDUCTIBLE_TOL,
        200,
    );
    Ok(ContractForm::Deductible { d: 0.5 * (lo + hi) })
}

/// Least-squares deductible for tabulated indemnity values:
/// `argmin_d Σ (yᵢ − (xᵢ − d)⁺)²` over `d ∈ [0, M]`.
///
/// On each interval between knots the set of knots above `d` is fixed, so
/// the objective is a quadratic in `d`; the global minimum is the best of
/// the per-interval minima.
pub fn best_fit_deductible(grid: &LossGrid, y: &[f64]) -> Result<f64> {
    if y.len() != grid.len() {
        return Err(Error::dim("indemnity is not on the loss grid"));
    }
    let x = grid.points();
    let n = x.len();
    // Breakpoints 0 = b₀ ≤ x₁ < … < xₙ ≤ M.
    let mut bounds = vec![0.0];
    bounds.extend_from_slice(x);
    bounds.push(grid.upper_bound());
    let sse = |d: f64| -> f64 {
        x.iter()
            .zip(y)
            .map(|(&xi, &yi)| {
                let r = yi - (xi - d).max(0.0);
                r * r
            })
            .sum()
    };
    let mut best = (f64::INFINITY, 0.0);
    // Interval k spans [bounds[k], bounds[k+1]]; knots with index ≥ k lie above it.
    for k in 0..=n {
        let (lo, hi) = (bounds[k], bounds[k + 1]);
        if hi < lo {
            continue;
        }
        let above = &x[k..];
        let d = if above.is_empty() {
            lo
        } else {
            let mean: f64 = above.iter().zip(&y[k..]).map(|(xi, yi)| xi - yi).sum::<f64>()
                / above.len() as f64;
            mean.clamp(lo, hi)
        };
        let s = sse(d);
        if s < best.0 {
            best = (s, d);
        }
    }
    Ok(best.1)
}
