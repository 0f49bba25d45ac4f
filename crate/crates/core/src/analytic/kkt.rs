use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{check_feasible, FeasibilityClass, IndemnitySchedule, LossGrid, Measure, UtilitySpec, WealthConfig};

/// Relative tolerance on the complementarity residuals.
pub const KKT_TOL: f64 = 1e-4;

/// Marginal optimality check of a no-sabotage indemnity.
///
/// Entry `j` describes the cell `(xⱼ₋₁, xⱼ]` (for `j = 0`, the cell
/// `(0, x₀]`). Raising the indemnity slope on that cell pays off at every
/// knot from `j` on, so its marginal value is the tail sum
/// `Tⱼ = Σ_{i≥j} ωᵢ (u′(Wᵢ)ξᵢ − λ(1+ρ)v′(Wᵢᴵⁿˢ))` with `ω` the reference
/// node weights. Optimality asks for slope 1 where `T > 0` and slope 0 where
/// `T < 0`.
#[derive(Debug, Clone, Serialize)]
pub struct KktReport {
    pub tail: Vec<f64>,
    /// Indemnity slope on each cell (0 for empty cells).
    pub slope: Vec<f64>,
    /// `width·(T⁺(1 − slope) + T⁻·slope)`: the first-order gain left on the
    /// table in each cell.
    pub residual: Vec<f64>,
    /// Absolute tolerance applied to `residual`.
    pub tol: f64,
    pub pass: Vec<bool>,
}

impl KktReport {
    pub fn pass_fraction(&self) -> f64 {
        self.pass.iter().filter(|&&p| p).count() as f64 / self.pass.len() as f64
    }

    pub fn all_pass(&self) -> bool {
        self.pass.iter().all(|&p| p)
    }

    /// Indices `j` where the tail sum changes sign between `j − 1` and `j`.
    pub fn sign_changes(&self) -> Vec<usize> {
        (1..self.tail.len())
            .filter(|&j| (self.tail[j - 1] > 0.0) != (self.tail[j] > 0.0))
            .collect()
    }

    /// True when every failing cell lies within `cells` of a sign change.
    pub fn failures_near_switches(&self, cells: usize) -> bool {
        let switches = self.sign_changes();
        self.pass.iter().enumerate().filter(|(_, &p)| !p).all(|(j, _)| {
            switches
                .iter()
                .any(|&s| (j as isize - s as isize).unsigned_abs() <= cells)
        })
    }
}

#[allow(clippy::too_many_arguments)]
pub fn verify_marginal_kkt(
    y: &IndemnitySchedule,
    lambda: f64,
    xi: &[f64],
    grid: &LossGrid,
    cfg: &WealthConfig,
    u: &UtilitySpec,
    v: &UtilitySpec,
    q: &Measure,
) -> Result<KktReport> {
    let n = grid.len();
    if xi.len() != n || q.len() != n {
        return Err(Error::dim("density and reference must be on the loss grid"));
    }
    if !check_feasible(y, grid, FeasibilityClass::NoSabotage)?.feasible() {
        return Err(Error::invalid("marginal KKT check needs a no-sabotage indemnity"));
    }
    let x = grid.points();
    let yv = y.values();
    let w = q.node_weights();
    let load = 1.0 + cfg.loading;

    let mut tau = vec![0.0; n];
    let mut scale = 0.0;
    for i in 0..n {
        if w[i] == 0.0 {
            continue;
        }
        let buyer = u.derivative(cfg.buyer_wealth(x[i], yv[i]))? * xi[i];
        let insurer = lambda * load * v.derivative(cfg.insurer_wealth(yv[i]))?;
        tau[i] = w[i] * (buyer - insurer);
        scale += w[i] * buyer;
    }
    // Utility gained by shifting the indemnity up by the whole loss range.
    let tol = KKT_TOL * scale * grid.upper_bound();

    let mut tail = vec![0.0; n];
    let mut acc = 0.0;
    for i in (0..n).rev() {
        acc += tau[i];
        tail[i] = acc;
    }
    let mut slope = vec![0.0; n];
    let mut residual = vec![0.0; n];
    for j in 0..n {
        let (width, rise) = if j == 0 { (x[0], yv[0]) } else { (x[j] - x[j - 1], yv[j] - yv[j - 1]) };
        if width > 0.0 {
            slope[j] = (rise / width).clamp(0.0, 1.0);
        }
        let t = tail[j];
        residual[j] = width * (t.max(0.0) * (1.0 - slope[j]) + (-t).max(0.0) * slope[j]);
    }
    let pass = residual.iter().map(|&r| r <= tol).collect();
    Ok(KktReport {
        tail,
        slope,
        residual,
        tol,
        pass,
    })
}
