use serde::Serialize;

use crate::ambiguity::solve_inner_for_utilities;
use crate::contract::SaddleResult;
use crate::error::{Error, Result};
use crate::linalg::bisect;

const CE_TOL: f64 = 1e-8;
const MAX_EXPANSIONS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CertaintyEquivalents {
    /// Largest sure payment the buyer would make to shed the loss: solves
    /// `inf_P E_P[u(W₀ − X + ce1)] = value`.
    pub ce1: f64,
    /// Certainty equivalent of the insured position: `u⁻¹(value)`.
    pub ce2: f64,
}

/// Certainty equivalents of a converged saddle result. Each evaluation of
/// the `ce1` equation solves a worst case over the ball.
pub fn certainty_equivalents(result: &SaddleResult) -> Result<CertaintyEquivalents> {
    let prob = &result.problem;
    let u = &prob.u;
    let value = result.value;
    let ce2 = u.inverse(value)?;

    let x = prob.grid.points();
    let x_max = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w0 = prob.wealth.w0;
    let worst = |c: f64| -> Result<f64> {
        let util = x
            .iter()
            .map(|&xi| u.value(w0 - xi + c))
            .collect::<Result<Vec<f64>>>()?;
        Ok(solve_inner_for_utilities(&util, &prob.reference, &prob.ambiguity)?.value - value)
    };

    // Smallest admissible shift keeps the worst wealth inside the domain.
    let floor = u.domain_lower().map(|l| l - w0 + x_max);
    let mut step = 1.0;
    let mut hi = floor.map_or(0.0, |f| f.max(0.0) + step);
    let mut expansions = 0;
    while worst(hi)? < 0.0 {
        hi += step;
        step *= 2.0;
        expansions += 1;
        if expansions > MAX_EXPANSIONS {
            return Err(Error::Bracket("certainty equivalent (upper)".into()));
        }
    }
    let mut lo = hi;
    let mut step = 1.0;
    expansions = 0;
    loop {
        lo = match floor {
            Some(f) => f + 0.5 * (lo - f),
            None => lo - step,
        };
        step *= 2.0;
        match worst(lo) {
            Ok(v) if v <= 0.0 => break,
            Ok(_) => {}
            Err(Error::Domain { .. }) => {}
            Err(e) => return Err(e),
        }
        expansions += 1;
        if expansions > MAX_EXPANSIONS {
            return Err(Error::Bracket("certainty equivalent (lower)".into()));
        }
    }
    let mut failure = None;
    let (a, b) = bisect(
        |c| match worst(c) {
            Ok(v) => v,
            Err(e) => {
                failure.get_or_insert(e);
                f64::NAN
            }
        },
        lo,
        hi,
        CE_TOL,
        400,
    );
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(CertaintyEquivalents {
        ce1: 0.5 * (a + b),
        ce2,
    })
}
