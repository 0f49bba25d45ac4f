//! Worst case over a Rényi ball `Σ pᵢ^α qᵢ^{1−α} ≤ δ̄`.
//!
//! Stationarity of the Lagrangian gives `pᵢ = qᵢ ((μ − cᵢ)₊ / (λα))^{1/(α−1)}`.
//! The normalization fixes `λ` once `μ` is known, so a single bisection on
//! `μ` drives the ball constraint to equality. Writing `μ = min c + t` and
//! `sᵢ = (1 − (cᵢ − min c)/t)₊ ∈ [0, 1]` keeps every power bounded. The
//! ball moment `Σ q s^{αβ} / (Σ q s^β)^α` with `β = 1/(α−1)` is scale free
//! in `s`. It falls from `Q(argmin c)^{1−α}` as `t → 0` to 1 as `t → ∞`.

use super::InnerSolution;
use crate::error::{Error, Result};
use crate::linalg::{bisect, grow_until};
use crate::model::{dot, DiscretePmf, Measure};

const MAX_BISECTIONS: usize = 200;

pub fn solve_inner_renyi(
    c: &[f64],
    q: &DiscretePmf,
    alpha: f64,
    delta: f64,
) -> Result<InnerSolution> {
    if c.len() != q.len() {
        return Err(Error::dim("utility vector and reference pmf differ in length"));
    }
    if !(alpha > 1.0) || !(delta >= 0.0) {
        return Err(Error::invalid("Renyi ball needs alpha > 1 and delta >= 0"));
    }
    let qw = q.weights();
    let support: Vec<usize> = (0..qw.len()).filter(|&i| qw[i] > 0.0).collect();
    let reference = || InnerSolution::reference(Measure::Pmf(q.clone()), c);

    let cmin = support.iter().map(|&i| c[i]).fold(f64::INFINITY, f64::min);
    let cmax = support.iter().map(|&i| c[i]).fold(f64::NEG_INFINITY, f64::max);
    let tie = 1e-14 * (1.0 + cmin.abs().max(cmax.abs()));
    if delta == 0.0 || support.len() == 1 || cmax - cmin <= tie {
        let mut sol = reference();
        sol.ball_slack = (delta * (alpha - 1.0)).exp() - 1.0;
        sol.mu = sol.value;
        return Ok(sol);
    }
    let bound = (delta * (alpha - 1.0)).exp();
    let beta = 1.0 / (alpha - 1.0);

    // Mass concentrated on the minimizers, if the ball is wide enough.
    let q_star: f64 = support
        .iter()
        .filter(|&&i| c[i] - cmin <= tie)
        .map(|&i| qw[i])
        .sum();
    if q_star.powf(1.0 - alpha) <= bound {
        let p: Vec<f64> = (0..qw.len())
            .map(|i| {
                if qw[i] > 0.0 && c[i] - cmin <= tie {
                    qw[i] / q_star
                } else {
                    0.0
                }
            })
            .collect();
        let moment = q_star.powf(1.0 - alpha);
        let pmf = DiscretePmf::normalized(p)?;
        return Ok(InnerSolution {
            value: dot(pmf.weights(), c),
            measure: Measure::Pmf(pmf),
            ball_slack: bound - moment,
            lambda: 0.0,
            mu: cmin,
            iterations: 0,
            converged: true,
        });
    }

    let excess: Vec<f64> = c.iter().map(|ci| ci - cmin).collect();
    let shape = |t: f64| -> Vec<f64> {
        support
            .iter()
            .map(|&i| (1.0 - excess[i] / t).max(0.0))
            .collect()
    };
    let moment = |t: f64| -> f64 {
        let s = shape(t);
        let mut num = 0.0;
        let mut z = 0.0;
        for (k, &i) in support.iter().enumerate() {
            let sb = s[k].powf(beta);
            z += qw[i] * sb;
            num += qw[i] * sb.powf(alpha);
        }
        num / z.powf(alpha)
    };

    let range = cmax - cmin;
    let hi = grow_until(|t| moment(t) <= bound, range, 2.0, 2000).ok_or_else(|| {
        Error::NoConvergence {
            solver: "renyi inner",
            detail: "no upper bracket for the normalization multiplier".into(),
            trace: vec![],
        }
    })?;
    let lo = if hi > range { 0.5 * hi } else { 0.0 };
    let mut iterations = 0;
    let (_, t) = bisect(
        |t| {
            iterations += 1;
            if t <= 0.0 {
                f64::INFINITY
            } else {
                moment(t) - bound
            }
        },
        lo,
        hi,
        1e-15 * hi,
        MAX_BISECTIONS,
    );

    let s = shape(t);
    let mut p = vec![0.0; qw.len()];
    let mut z = 0.0;
    for (k, &i) in support.iter().enumerate() {
        p[i] = qw[i] * s[k].powf(beta);
        z += p[i];
    }
    p.iter_mut().for_each(|v| *v /= z);
    let pmf = DiscretePmf::normalized(p)?;
    let m = crate::metrics::renyi_moment(pmf.weights(), qw, alpha)?;
    Ok(InnerSolution {
        value: dot(pmf.weights(), c),
        measure: Measure::Pmf(pmf),
        ball_slack: bound - m,
        lambda: t * z.powf(alpha - 1.0) / alpha,
        mu: cmin + t,
        iterations,
        converged: true,
    })
}
