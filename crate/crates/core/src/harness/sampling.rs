//! Loss models, seeded inverse-cdf sampling, and empirical distributions.
//!
//! The generator is ChaCha8 seeded from a 64-bit integer, so a seed fixes
//! the sample on every platform.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{DiscretePmf, LossGrid, PiecewiseLinearCdf};

/// Loss distributions supported by the harness. Continuous models are
/// truncated to `[0, upper]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LossModel {
    /// Generalized Pareto with shape `ξ > 0` and scale `σ`.
    TruncatedGpd { shape: f64, scale: f64, upper: f64 },
    TruncatedExponential { mean: f64, upper: f64 },
    /// Degenerate loss.
    PointMass { at: f64, upper: f64 },
    /// Fixed atoms with given probabilities.
    ExplicitGrid {
        points: Vec<f64>,
        weights: Vec<f64>,
        upper: f64,
    },
}

impl LossModel {
    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            LossModel::TruncatedGpd {
                shape,
                scale,
                upper,
            } => *shape > 0.0 && *scale > 0.0 && *upper > 0.0,
            LossModel::TruncatedExponential { mean, upper } => *mean > 0.0 && *upper > 0.0,
            LossModel::PointMass { at, upper } => *at >= 0.0 && at <= upper,
            LossModel::ExplicitGrid {
                points,
                weights,
                upper,
            } => {
                points.len() == weights.len()
                    && points.len() >= 2
                    && points.iter().all(|p| *p >= 0.0 && p <= upper)
                    && weights.iter().all(|w| *w >= 0.0)
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("invalid loss model {self:?}")))
        }
    }

    pub fn upper(&self) -> f64 {
        match self {
            LossModel::TruncatedGpd { upper, .. }
            | LossModel::TruncatedExponential { upper, .. }
            | LossModel::PointMass { upper, .. }
            | LossModel::ExplicitGrid { upper, .. } => *upper,
        }
    }

    /// Untruncated cdf.
    fn base_cdf(&self, x: f64) -> f64 {
        if x < 0.0 {
            return 0.0;
        }
        match *self {
            LossModel::TruncatedGpd { shape, scale, .. } => {
                1.0 - (1.0 + shape * x / scale).powf(-1.0 / shape)
            }
            LossModel::TruncatedExponential { mean, .. } => -(-x / mean).exp_m1(),
            LossModel::PointMass { at, .. } => {
                if x >= at {
                    1.0
                } else {
                    0.0
                }
            }
            LossModel::ExplicitGrid {
                ref points,
                ref weights,
                ..
            } => {
                let total: f64 = weights.iter().sum();
                points
                    .iter()
                    .zip(weights)
                    .filter(|(p, _)| **p <= x)
                    .map(|(_, w)| w / total)
                    .sum()
            }
        }
    }

    /// Truncated cdf on `[0, upper]`.
    pub fn cdf(&self, x: f64) -> f64 {
        let m = self.upper();
        if x >= m {
            return 1.0;
        }
        match self {
            LossModel::TruncatedGpd { .. } | LossModel::TruncatedExponential { .. } => {
                self.base_cdf(x) / self.base_cdf(m)
            }
            _ => self.base_cdf(x),
        }
    }

    /// Inverse of the truncated cdf at `p ∈ [0, 1)`.
    pub fn quantile(&self, p: f64) -> f64 {
        let m = self.upper();
        match *self {
            LossModel::TruncatedGpd { shape, scale, .. } => {
                let pp = p * self.base_cdf(m);
                (scale / shape * ((-(-pp).ln_1p() * shape).exp_m1())).min(m)
            }
            LossModel::TruncatedExponential { mean, .. } => {
                let pp = p * self.base_cdf(m);
                (-mean * (-pp).ln_1p()).min(m)
            }
            LossModel::PointMass { at, .. } => at,
            LossModel::ExplicitGrid {
                ref points,
                ref weights,
                ..
            } => {
                let total: f64 = weights.iter().sum();
                let mut order: Vec<usize> = (0..points.len()).collect();
                order.sort_by(|&a, &b| points[a].total_cmp(&points[b]));
                let mut acc = 0.0;
                for &i in &order {
                    acc += weights[i] / total;
                    if p < acc {
                        return points[i];
                    }
                }
                points[*order.last().unwrap()]
            }
        }
    }

    /// Mean of the truncated distribution.
    pub fn mean(&self) -> f64 {
        let m = self.upper();
        match *self {
            LossModel::TruncatedExponential { mean, .. } => {
                let e = (-m / mean).exp();
                mean - m * e / (1.0 - e)
            }
            LossModel::TruncatedGpd { shape, scale, .. } => {
                // E[X | X ≤ M] = (∫₀ᴹ S(x) dx − M S(M)) / F(M).
                let s = |x: f64| (1.0 + shape * x / scale).powf(-1.0 / shape);
                let int = scale / (1.0 - shape) * (1.0 - (1.0 + shape * m / scale).powf(1.0 - 1.0 / shape));
                (int - m * s(m)) / (1.0 - s(m))
            }
            LossModel::PointMass { at, .. } => at,
            LossModel::ExplicitGrid {
                ref points,
                ref weights,
                ..
            } => {
                let total: f64 = weights.iter().sum();
                points.iter().zip(weights).map(|(p, w)| p * w / total).sum()
            }
        }
    }

    /// `count` i.i.d. draws by inverse cdf.
    pub fn sample(&self, count: usize, seed: u64) -> Result<Vec<f64>> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok((0..count)
            .map(|_| self.quantile(rng.random::<f64>()))
            .collect())
    }

    /// The model's own cdf at the knots of `grid`, as a piecewise linear cdf.
    pub fn cdf_on_grid(&self, grid: &LossGrid) -> Result<PiecewiseLinearCdf> {
        let mut vals: Vec<f64> = grid.points().iter().map(|&x| self.cdf(x)).collect();
        for i in 1..vals.len() {
            vals[i] = vals[i].max(vals[i - 1]);
        }
        *vals.last_mut().unwrap() = 1.0;
        PiecewiseLinearCdf::new(grid, vals)
    }
}

/// Empirical cdf of a seeded sample, evaluated at `knots` equally spaced
/// points on `[0, M]` and interpolated linearly in between.
pub fn sample_empirical_cdf(
    model: &LossModel,
    knots: usize,
    sample_size: usize,
    seed: u64,
) -> Result<(LossGrid, PiecewiseLinearCdf)> {
    if knots < 2 || sample_size == 0 {
        return Err(Error::invalid("need at least two knots and one draw"));
    }
    let grid = LossGrid::uniform(knots, model.upper())?;
    let mut draws = model.sample(sample_size, seed)?;
    draws.sort_by(|a, b| a.total_cmp(b));
    let total = draws.len() as f64;
    let mut vals: Vec<f64> = grid
        .points()
        .iter()
        .map(|&x| draws.partition_point(|&d| d <= x) as f64 / total)
        .collect();
    *vals.last_mut().unwrap() = 1.0;
    let cdf = PiecewiseLinearCdf::new(&grid, vals)?;
    Ok((grid, cdf))
}

/// Empirical pmf of a seeded sample on its own sorted, de-duplicated atoms.
pub fn sample_empirical_pmf(
    model: &LossModel,
    sample_size: usize,
    seed: u64,
) -> Result<(LossGrid, DiscretePmf)> {
    if sample_size < 2 {
        return Err(Error::invalid("need at least two draws"));
    }
    let mut draws = model.sample(sample_size, seed)?;
    draws.sort_by(|a, b| a.total_cmp(b));
    let mut points: Vec<f64> = Vec::new();
    let mut counts: Vec<f64> = Vec::new();
    for d in draws {
        if points.last() == Some(&d) {
            *counts.last_mut().unwrap() += 1.0;
        } else {
            points.push(d);
            counts.push(1.0);
        }
    }
    let grid = LossGrid::new(points, model.upper())?;
    let pmf = DiscretePmf::normalized(counts)?;
    Ok((grid, pmf))
}
