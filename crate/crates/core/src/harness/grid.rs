//! Grid sizing from the trapezoid error bound, and an empirical check of
//! that error against fine quadrature.

use crate::error::{Error, Result};
use crate::model::{LossGrid, PiecewiseLinearCdf, UtilitySpec, WealthConfig};

/// Bound `K` on `|u″|` over the buyer's wealth range
/// `[W₀ − M − Π₀, W₀ − Π₀]`. For CARA the curvature is evaluated at the top
/// of the range, `γe^{−γ(W₀−Π₀)}`.
pub fn curvature_bound(u: &UtilitySpec, cfg: &WealthConfig, upper: f64) -> Result<f64> {
    u.validate()?;
    let top = cfg.w0 - cfg.premium;
    match *u {
        UtilitySpec::Cara { gamma } => Ok(gamma * (-gamma * top).exp()),
        UtilitySpec::Power { .. } => Ok(u.second_derivative(top - upper)?.abs()),
        UtilitySpec::Linear => Ok(0.0),
    }
}

/// Smallest `n ≥ 2` with `K·L³/(12n²) ≤ ε`, where `L` is the loss range.
pub fn choose_grid_size(u: &UtilitySpec, cfg: &WealthConfig, range: f64, eps: f64) -> Result<usize> {
    if !(eps > 0.0) || !(range > 0.0) {
        return Err(Error::invalid("grid sizing needs a positive range and target error"));
    }
    let k = curvature_bound(u, cfg, range)?;
    let bound = |n: usize| k * range.powi(3) / (12.0 * (n * n) as f64);
    let mut n = ((k * range.powi(3) / (12.0 * eps)).sqrt().ceil() as usize).max(2);
    while bound(n) > eps {
        n += 1;
    }
    while n > 2 && bound(n - 1) <= eps {
        n -= 1;
    }
    Ok(n)
}

/// Difference between the trapezoid node-weight expectation of
/// `u(W₀ − r(X) − Π₀)` and a midpoint quadrature with `cells` cells, both
/// under the piecewise linear cdf `f` with `r` interpolated linearly.
/// `cells` is the total number of quadrature cells over the loss range.
pub fn trapezoid_error(
    grid: &LossGrid,
    f: &PiecewiseLinearCdf,
    retention: &[f64],
    cfg: &WealthConfig,
    u: &UtilitySpec,
    cells: usize,
) -> Result<f64> {
    let x = grid.points();
    if retention.len() != x.len() || f.len() != x.len() {
        return Err(Error::dim("retention and cdf must be on the loss grid"));
    }
    let g = |r: f64| u.value(cfg.w0 - r - cfg.premium);
    let w = crate::model::cdf_node_weights(f.values());
    let mut trap = 0.0;
    for (wi, &ri) in w.iter().zip(retention) {
        trap += wi * g(ri)?;
    }

    // Cells are laid out per segment so none straddles a density jump.
    let fv = f.values();
    let dens = f.segment_densities();
    let span = x[x.len() - 1] - x[0];
    let mut quad = fv[0] * g(retention[0])?;
    for seg in 0..x.len() - 1 {
        let width = x[seg + 1] - x[seg];
        let k = ((cells as f64 * width / span).round() as usize).max(1);
        let h = width / k as f64;
        for c in 0..k {
            let s = (c as f64 + 0.5) / k as f64;
            let r = retention[seg] + s * (retention[seg + 1] - retention[seg]);
            quad += dens[seg] * h * g(r)?;
        }
    }
    Ok((trap - quad).abs())
}
