use super::ContractForm;
use crate::error::{Error, Result};
use crate::linalg::{bisect, grow_until};
use crate::model::{lebesgue_decompose, DiscretePmf, LossGrid, Measure, UtilitySpec, WealthConfig};

/// Participation is calibrated until its slack is this close to zero.
const PARTICIPATION_TARGET: f64 = 1e-8;
const MAX_BISECTIONS: usize = 300;

/// Pointwise first-order-condition contract for a fixed multiplier `λ`.
///
/// At each knot with `hᵢ > 0` the indemnity solves
/// `u′(W₀ − x + y − Π₀)·h − λ(1+ρ)·v′(W₀ᴵⁿˢ − (1+ρ)y + Π₀) = 0`, clamped to
/// `[0, x]`. The left side is decreasing in `y`, so the root is bisected.
/// With `λ = 0` the result is full insurance; with `λ > 0` knots where
/// `hᵢ = 0` get nothing.
pub fn solve_pointwise_foc(
    h: &[f64],
    grid: &LossGrid,
    cfg: &WealthConfig,
    u: &UtilitySpec,
    v: &UtilitySpec,
    lambda: f64,
) -> Result<ContractForm> {
    if h.len() != grid.len() {
        return Err(Error::dim("density is not on the loss grid"));
    }
    if !(lambda >= 0.0) || h.iter().any(|&hi| !(hi >= 0.0) || !hi.is_finite()) {
        return Err(Error::invalid("multiplier and density must be nonnegative"));
    }
    if lambda == 0.0 {
        return Ok(ContractForm::FullInsurance);
    }
    let load = 1.0 + cfg.loading;
    let mut values = Vec::with_capacity(grid.len());
    for (&x, &hi) in grid.points().iter().zip(h) {
        if hi == 0.0 {
            values.push(0.0);
            continue;
        }
        // Checked evaluations at both ends cover the whole bracket: buyer
        // wealth rises and insurer wealth falls monotonically in y.
        let g_checked = |y: f64| -> Result<f64> {
            Ok(hi * u.derivative(cfg.buyer_wealth(x, y))?
                - lambda * load * v.derivative(cfg.insurer_wealth(y))?)
        };
        if g_checked(0.0)? <= 0.0 {
            values.push(0.0);
            continue;
        }
        if g_checked(x)? >= 0.0 {
            values.push(x);
            continue;
        }
        let g = |y: f64| {
            hi * u.derivative_unchecked(cfg.buyer_wealth(x, y))
                - lambda * load * v.derivative_unchecked(cfg.insurer_wealth(y))
        };
        let (lo, up) = bisect(g, 0.0, x, 1e-13 * x.max(1.0), MAX_BISECTIONS);
        values.push(0.5 * (lo + up));
    }
    Ok(ContractForm::PointwiseFoc { values })
}

/// Calibrates the participation multiplier of the pointwise FOC contract so
/// that the insurer is exactly indifferent.
///
/// Knots outside the support of `q` are fully insured. If even the `λ → 0`
/// limit leaves the insurer with positive slack, the multiplier is zero and
/// the indemnity on `{h = 0}` is the proportional `(1 − c)x` that makes
/// participation bind.
pub fn calibrate_lambda(
    h: &[f64],
    grid: &LossGrid,
    cfg: &WealthConfig,
    u: &UtilitySpec,
    v: &UtilitySpec,
    q: &Measure,
) -> Result<(f64, ContractForm)> {
    if q.len() != grid.len() || h.len() != grid.len() {
        return Err(Error::dim("density and reference must be on the loss grid"));
    }
    let x = grid.points();
    let qw = q.node_weights();
    let load = 1.0 + cfg.loading;
    v.value(cfg.insurer_wealth(grid.upper_bound()))?;
    let slack = |y: &[f64]| -> f64 {
        qw.iter()
            .zip(y)
            .filter(|(w, _)| **w != 0.0)
            .map(|(w, &yi)| w * v.diff_unchecked(cfg.w0_ins - load * yi + cfg.premium, cfg.w0_ins))
            .sum()
    };
    if slack(x) >= 0.0 {
        return Ok((0.0, ContractForm::FullInsurance));
    }

    let null: Vec<bool> = qw.iter().zip(h).map(|(&w, &hi)| w != 0.0 && hi == 0.0).collect();
    if null.iter().any(|&b| b) {
        let limit: Vec<f64> = x.iter().zip(&null).map(|(&xi, &z)| if z { 0.0 } else { xi }).collect();
        if slack(&limit) >= 0.0 {
            let shaded = |c: f64| -> Vec<f64> {
                x.iter()
                    .zip(&null)
                    .map(|(&xi, &z)| if z { (1.0 - c) * xi } else { xi })
                    .collect()
            };
            let (_, c) = bisect(|c| slack(&shaded(c)), 0.0, 1.0, 1e-15, MAX_BISECTIONS);
            return Ok((0.0, ContractForm::PointwiseFoc { values: shaded(c) }));
        }
    }

    let contract = |lambda: f64| -> Result<Vec<f64>> {
        let mut y = solve_pointwise_foc(h, grid, cfg, u, v, lambda)?.values_on(grid)?;
        for (yi, (&w, &xi)) in y.iter_mut().zip(qw.iter().zip(x)) {
            if w == 0.0 {
                *yi = xi;
            }
        }
        Ok(y)
    };
    let hi = grow_until(
        |l| contract(l).map(|y| slack(&y) >= 0.0).unwrap_or(false),
        1.0,
        4.0,
        200,
    )
    .ok_or_else(|| Error::Bracket("participation multiplier".into()))?;
    let (mut lo, mut hi) = (0.0, hi);
    let mut best = contract(hi)?;
    for _ in 0..MAX_BISECTIONS {
        let s = slack(&best);
        if s <= PARTICIPATION_TARGET || hi - lo <= 1e-15 * hi {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let y = contract(mid)?;
        if slack(&y) >= 0.0 {
            hi = mid;
            best = y;
        } else {
            lo = mid;
        }
    }
    Ok((hi, ContractForm::PointwiseFoc { values: best }))
}

/// Contract for a risk-neutral insurer against the worst case `p` with
/// density `h = p/q` on `A = {q > 0}`.
///
/// With `Π̃₀ = E_Q[X] − Π₀/(1+ρ)` the retention budget and
/// `A_h = {h = 0} ∩ A`:
/// - if `E_Q[X·1_{A_h}] < Π̃₀`, the retention on `A ∖ A_h` is
///   `clamp(W₀ − Π₀ − (u′)⁻¹(λ/h), 0, x)` with `λ` calibrated to the budget,
///   and everything on `A_h` is retained;
/// - otherwise the retention is `c·x` on `A_h` with `c = Π̃₀ / E_Q[X·1_{A_h}]`
///   and zero elsewhere.
///
/// Outside `A` the loss is fully insured.
pub fn build_prop41_contract(
    p: &DiscretePmf,
    q: &DiscretePmf,
    grid: &LossGrid,
    cfg: &WealthConfig,
    u: &UtilitySpec,
) -> Result<ContractForm> {
    if p.len() != grid.len() || q.len() != grid.len() {
        return Err(Error::dim("measures must be on the loss grid"));
    }
    let dec = lebesgue_decompose(p, q)?;
    let x = grid.points();
    let qw = q.weights();
    let expected: f64 = qw.iter().zip(x).map(|(w, xi)| w * xi).sum();
    let budget = cfg.retention_budget(expected);
    if budget <= 0.0 {
        return Ok(ContractForm::FullInsurance);
    }
    let null: Vec<bool> = (0..x.len()).map(|i| dec.ac_mask[i] && dec.density[i] == 0.0).collect();
    let null_loss: f64 = (0..x.len()).filter(|&i| null[i]).map(|i| qw[i] * x[i]).sum();

    if null_loss >= budget {
        if null_loss == 0.0 {
            return Err(Error::Structural(
                "proportional retention on a null set with zero expected loss".into(),
            ));
        }
        let c = budget / null_loss;
        let values: Vec<f64> = (0..x.len())
            .map(|i| if null[i] { (1.0 - c) * x[i] } else { x[i] })
            .collect();
        // A prefix null set is the classic proportional-below-threshold shape.
        let k = null.iter().take_while(|&&z| z).count();
        if k > 0 && null[k..].iter().all(|&z| !z) {
            return Ok(ContractForm::Proportional { c, threshold: x[k - 1] });
        }
        return Ok(ContractForm::PointwiseFoc { values });
    }

    if u.is_linear() {
        return Err(Error::invalid("interior retention needs a strictly concave buyer utility"));
    }
    let cap = cfg.w0 - cfg.premium;
    let retention = |lambda: f64| -> Result<Vec<f64>> {
        (0..x.len())
            .map(|i| {
                if !dec.ac_mask[i] {
                    Ok(0.0)
                } else if null[i] {
                    Ok(x[i])
                } else {
                    let r = cap - u.inverse_derivative(lambda / dec.density[i])?;
                    Ok(r.clamp(0.0, x[i]))
                }
            })
            .collect()
    };
    let shortfall = |lambda: f64| -> Result<f64> {
        let r = retention(lambda)?;
        Ok(qw.iter().zip(&r).map(|(w, ri)| w * ri).sum::<f64>() - budget)
    };
    let hi = grow_until(|l| shortfall(l).map(|s| s >= 0.0).unwrap_or(false), 1.0, 4.0, 400)
        .ok_or_else(|| Error::Bracket("retention multiplier (upper)".into()))?;
    let mut lo = hi;
    for _ in 0..400 {
        if shortfall(lo)? < 0.0 {
            break;
        }
        lo *= 0.25;
    }
    if shortfall(lo)? >= 0.0 {
        return Err(Error::Bracket("retention multiplier (lower)".into()));
    }
    let (_, hi) = bisect(
        |l| shortfall(l).unwrap_or(f64::NAN),
        lo,
        hi,
        1e-15 * hi,
        MAX_BISECTIONS,
    );
    let r = retention(hi)?;
    Ok(ContractForm::PointwiseFoc {
        values: x.iter().zip(&r).map(|(xi, ri)| xi - ri).collect(),
    })
}
