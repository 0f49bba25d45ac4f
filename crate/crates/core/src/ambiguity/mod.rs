//! Inner worst-case problems: for a fixed indemnity, find the measure in the
//! ambiguity ball that minimizes the buyer's expected utility.
//!
//! Both problems are linear in the measure. With node utilities `uᵢ` the
//! objective is `Σ ωᵢ(P) uᵢ`. The Rényi ball is handled through its KKT
//! system in closed form up to one scalar root. The Wasserstein ball is
//! handled by a barrier method on a smooth lifted formulation (see
//! [`wasserstein`]).

mod renyi;
mod wasserstein;

pub use renyi::solve_inner_renyi;
pub use wasserstein::solve_inner_wasserstein;

use crate::error::{Error, Result};
use crate::metrics::AmbiguitySetSpec;
use crate::model::{node_utilities, LossGrid, Measure, UtilitySpec, WealthConfig};

/// Worst-case measure for one indemnity.
#[derive(Debug, Clone, PartialEq)]
pub struct InnerSolution {
    pub measure: Measure,
    /// Expected utility under `measure`.
    pub value: f64,
    /// Ball slack (positive inside).
    pub ball_slack: f64,
    /// Multiplier of the ball constraint.
    pub lambda: f64,
    /// Multiplier of the normalization constraint (Rényi only).
    pub mu: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl InnerSolution {
    pub(crate) fn reference(measure: Measure, util: &[f64]) -> Self {
        let value = crate::model::dot(&measure.node_weights(), util);
        InnerSolution {
            measure,
            value,
            ball_slack: 0.0,
            lambda: 0.0,
            mu: 0.0,
            iterations: 0,
            converged: true,
        }
    }
}

/// Dispatches on the ambiguity kind for a given node-utility vector.
pub fn solve_inner_for_utilities(
    util: &[f64],
    reference: &Measure,
    ambiguity: &AmbiguitySetSpec,
) -> Result<InnerSolution> {
    ambiguity.validate()?;
    match (ambiguity, reference) {
        (AmbiguitySetSpec::Renyi { alpha, delta }, Measure::Pmf(q)) => {
            solve_inner_renyi(util, q, *alpha, *delta)
        }
        (AmbiguitySetSpec::Wasserstein { delta }, Measure::Cdf(f)) => {
            solve_inner_wasserstein(util, f, *delta)
        }
        _ => Err(Error::invalid(
            "Wasserstein balls need a cdf reference and Renyi balls a pmf reference",
        )),
    }
}

/// Worst case for indemnity values `y`.
pub fn solve_inner(
    y: &[f64],
    grid: &LossGrid,
    cfg: &WealthConfig,
    u: &UtilitySpec,
    reference: &Measure,
    ambiguity: &AmbiguitySetSpec,
) -> Result<InnerSolution> {
    let util = node_utilities(y, grid, cfg, u)?;
    solve_inner_for_utilities(&util, reference, ambiguity)
}
