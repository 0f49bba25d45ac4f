//! Closed-form and first-order-condition contracts, piecewise linear
//! Δ-approximations, certainty equivalents, and marginal KKT checks.
//!
//! These constructions work atom by atom on the loss grid. They serve as
//! independent cross-checks of the numerical saddle solver.

mod ce;
mod deductible;
mod delta;
mod foc;
mod kkt;
mod linear;

pub use ce::{certainty_equivalents, CertaintyEquivalents};
pub use deductible::{best_fit_deductible, solve_deductible, stop_loss};
pub use delta::{build_delta_estimators, EstimatorSegment, PwlEstimatorPair, MAX_SEGMENTS};
pub use foc::{build_prop41_contract, calibrate_lambda, solve_pointwise_foc};
pub use kkt::{verify_marginal_kkt, KktReport, KKT_TOL};
pub use linear::build_linear_linear_contract;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{FeasibilityClass, IndemnitySchedule, LossGrid};

/// A contract in parametric form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ContractForm {
    /// `y = x`.
    FullInsurance,
    /// `y = max(x − d, 0)`.
    Deductible { d: f64 },
    /// `y = (1 − c)x` for `x ≤ threshold`, `y = x` above it.
    Proportional { c: f64, threshold: f64 },
    /// `y = Σ (min(x, detach) − attach)⁺` over the layers.
    LayerSet { layers: Vec<(f64, f64)> },
    /// Indemnity tabulated on the grid.
    PointwiseFoc { values: Vec<f64> },
}

impl ContractForm {
    /// Indemnity at loss `x`. Tabulated forms are looked up by grid index.
    fn at(&self, i: usize, x: f64) -> f64 {
        match self {
            ContractForm::FullInsurance => x,
            ContractForm::Deductible { d } => (x - d).max(0.0),
            ContractForm::Proportional { c, threshold } => {
                if x <= *threshold {
                    (1.0 - c) * x
                } else {
                    x
                }
            }
            ContractForm::LayerSet { layers } => layers
                .iter()
                .map(|&(a, b)| (x.min(b) - a).max(0.0))
                .sum::<f64>()
                .min(x),
            ContractForm::PointwiseFoc { values } => values[i],
        }
    }

    /// Indemnity values on `grid`, checked against `class`.
    pub fn materialize(&self, grid: &LossGrid, class: FeasibilityClass) -> Result<IndemnitySchedule> {
        if let ContractForm::PointwiseFoc { values } = self {
            if values.len() != grid.len() {
                return Err(Error::dim("tabulated contract is not on the grid"));
            }
        }
        let values = grid
            .points()
            .iter()
            .enumerate()
            .map(|(i, &x)| self.at(i, x))
            .collect();
        IndemnitySchedule::validated(grid, values, class)
    }

    /// Indemnity values on `grid` without a feasibility check.
    pub fn values_on(&self, grid: &LossGrid) -> Result<Vec<f64>> {
        if let ContractForm::PointwiseFoc { values } = self {
            if values.len() != grid.len() {
                return Err(Error::dim("tabulated contract is not on the grid"));
            }
        }
        Ok(grid
            .points()
            .iter()
            .enumerate()
            .map(|(i, &x)| self.at(i, x))
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deductible_materializes_to_stop_loss() {
        let grid = LossGrid::uniform(11, 10.0).unwrap();
        let y = ContractForm::Deductible { d: 3.5 }
            .materialize(&grid, FeasibilityClass::NoSabotage)
            .unwrap();
        for (x, v) in grid.points().iter().zip(y.values()) {
            assert_eq!(*v, (x - 3.5f64).max(0.0));
        }
    }

    #[test]
    fn proportional_jump_is_not_no_sabotage() {
        let grid = LossGrid::uniform(5, 4.0).unwrap();
        let form = ContractForm::Proportional { c: 0.5, threshold: 2.0 };
        assert!(form.materialize(&grid, FeasibilityClass::Basic).is_ok());
        assert!(form.materialize(&grid, FeasibilityClass::NoSabotage).is_err());
    }

    #[test]
    fn layers_add_up() {
        let grid = LossGrid::uniform(11, 10.0).unwrap();
        let form = ContractForm::LayerSet {
            layers: vec![(1.0, 3.0), (6.0, 10.0)],
        };
        let y = form.materialize(&grid, FeasibilityClass::NoSabotage).unwrap();
        assert_eq!(y.values(), &[0.0, 0.0, 1.0, 2.0, 2.0, 2.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
    }
}
