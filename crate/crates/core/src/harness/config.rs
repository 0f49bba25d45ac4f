//! JSON experiment configuration.
//!
//! ```json
//! {
//!   "name": "gpd-wasserstein",
//!   "wealth": { "w0": 250, "w0_ins": 1000, "premium": 4, "loading": 0.2 },
//!   "buyer_utility": { "kind": "cara", "gamma": 0.03 },
//!   "insurer_utility": { "kind": "linear" },
//!   "loss_model": { "kind": "truncated_gpd", "shape": 0.3, "scale": 5, "upper": 246 },
//!   "grid_size": 200,
//!   "sample_size": 2500,
//!   "ambiguity": { "kind": "wasserstein", "delta": 0.3 },
//!   "class": "I_hat",
//!   "seed": 1
//! }
//! ```
//!
//! Wasserstein balls use the empirical cdf of the sample on `grid_size`
//! equally spaced knots. Rényi balls use the empirical pmf on the distinct
//! draws (`sample_size` defaults to `grid_size`). Explicit grids are used
//! as given and need no seed. Optional keys: `solver` (tolerance
//! overrides), `sweep_deltas`, `output_dir`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::sampling::{sample_empirical_cdf, sample_empirical_pmf, LossModel};
use crate::contract::{SaddleProblem, ScpOptions};
use crate::error::{Error, Result};
use crate::metrics::AmbiguitySetSpec;
use crate::model::{DiscretePmf, FeasibilityClass, LossGrid, Measure, PiecewiseLinearCdf, UtilitySpec, WealthConfig};

/// Overrides the configured output directory when set.
pub const OUTPUT_DIR_ENV: &str = "MEU_INSURANCE_OUT";
const DEFAULT_OUTPUT_DIR: &str = "out";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverOverrides {
    pub stop_tol: Option<f64>,
    pub duplicate_tol: Option<f64>,
    pub max_rounds: Option<usize>,
    pub gap_tol: Option<f64>,
    pub barrier_factor: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: Option<String>,
    pub wealth: WealthConfig,
    pub buyer_utility: UtilitySpec,
    pub insurer_utility: UtilitySpec,
    pub loss_model: LossModel,
    #[serde(default)]
    pub grid_size: Option<usize>,
    #[serde(default)]
    pub sample_size: Option<usize>,
    pub ambiguity: AmbiguitySetSpec,
    pub class: FeasibilityClass,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub solver: SolverOverrides,
    #[serde(default)]
    pub sweep_deltas: Vec<f64>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        ExperimentConfig::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(Error::from)
    }

    pub fn validate(&self) -> Result<()> {
        self.wealth.validate()?;
        self.buyer_utility.validate()?;
        self.insurer_utility.validate()?;
        self.loss_model.validate()?;
        self.ambiguity.validate()?;
        if self.sweep_deltas.iter().any(|d| !(*d >= 0.0) || !d.is_finite()) {
            return Err(Error::invalid("sweep radii must be finite and nonnegative"));
        }
        if !matches!(self.loss_model, LossModel::ExplicitGrid { .. }) {
            if self.seed.is_none() {
                return Err(Error::invalid("a seed is required to sample the loss model"));
            }
            if self.grid_size.unwrap_or(0) < 2 {
                return Err(Error::invalid("grid_size must be at least 2 for sampled models"));
            }
        }
        Ok(())
    }

    pub fn label(&self) -> &str {
        self.name.as_deref().unwrap_or("experiment")
    }

    /// The reference measure and its grid.
    pub fn reference(&self) -> Result<(LossGrid, Measure)> {
        let wasserstein = matches!(self.ambiguity, AmbiguitySetSpec::Wasserstein { .. });
        if let LossModel::ExplicitGrid {
            points,
            weights,
            upper,
        } = &self.loss_model
        {
            let mut pairs: Vec<(f64, f64)> = points.iter().cloned().zip(weights.iter().cloned()).collect();
            pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
            let grid = LossGrid::new(pairs.iter().map(|p| p.0).collect(), *upper)?;
            if grid.len() != pairs.len() {
                return Err(Error::invalid("explicit grid has repeated points"));
            }
            let pmf = DiscretePmf::normalized(pairs.iter().map(|p| p.1).collect())?;
            let measure = if wasserstein {
                let mut vals = pmf.cdf_values();
                *vals.last_mut().unwrap() = 1.0;
                Measure::Cdf(PiecewiseLinearCdf::new(&grid, vals)?)
            } else {
                Measure::Pmf(pmf)
            };
            return Ok((grid, measure));
        }
        let seed = self
            .seed
            .ok_or_else(|| Error::invalid("a seed is required to sample the loss model"))?;
        let n = self
            .grid_size
            .ok_or_else(|| Error::invalid("grid_size is required for sampled models"))?;
        let draws = self.sample_size.unwrap_or(n);
        if wasserstein {
            let (grid, cdf) = sample_empirical_cdf(&self.loss_model, n, draws, seed)?;
            Ok((grid, Measure::Cdf(cdf)))
        } else {
            let (grid, pmf) = sample_empirical_pmf(&self.loss_model, draws, seed)?;
            Ok((grid, Measure::Pmf(pmf)))
        }
    }

    pub fn build_problem(&self) -> Result<SaddleProblem> {
        self.validate()?;
        let (grid, reference) = self.reference()?;
        let problem = SaddleProblem {
            grid,
            wealth: self.wealth,
            u: self.buyer_utility,
            v: self.insurer_utility,
            reference,
            ambiguity: self.ambiguity,
            class: self.class,
        };
        problem.validate()?;
        Ok(problem)
    }

    pub fn scp_options(&self) -> ScpOptions {
        let mut opts = ScpOptions::default();
        let s = &self.solver;
        if let Some(v) = s.stop_tol {
            opts.stop_tol = v;
        }
        if let Some(v) = s.duplicate_tol {
            opts.duplicate_tol = v;
        }
        if let Some(v) = s.max_rounds {
            opts.max_rounds = v;
        }
        if let Some(v) = s.gap_tol {
            opts.outer.gap_tol = v;
        }
        if let Some(v) = s.barrier_factor {
            opts.outer.barrier_factor = v;
        }
        opts
    }

    /// `$MEU_INSURANCE_OUT`, else the configured directory, else `out`.
    pub fn output_dir(&self) -> PathBuf {
        match std::env::var_os(OUTPUT_DIR_ENV) {
            Some(dir) if !dir.is_empty() => PathBuf::from(dir),
            _ => self
                .output_dir
                .clone()
                .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const EXPLICIT: &str = r#"{
        "wealth": { "w0": 10, "w0_ins": 20, "premium": 0.5, "loading": 0.1 },
        "buyer_utility": { "kind": "cara", "gamma": 0.5 },
        "insurer_utility": { "kind": "linear" },
        "loss_model": { "kind": "explicit_grid", "points": [2, 0, 1], "weights": [1, 2, 1], "upper": 2 },
        "ambiguity": { "kind": "renyi", "alpha": 2, "delta": 0.1 },
        "class": "I"
    }"#;

    #[test]
    fn explicit_grid_is_sorted_with_its_weights() {
        let cfg = ExperimentConfig::from_json(EXPLICIT).unwrap();
        let p = cfg.build_problem().unwrap();
        assert_eq!(p.grid.points(), &[0.0, 1.0, 2.0]);
        assert_eq!(p.reference.node_weights(), vec![0.5, 0.25, 0.25]);
    }

    #[test]
    fn sampling_needs_a_seed() {
        let text = EXPLICIT.replace(
            r#"{ "kind": "explicit_grid", "points": [2, 0, 1], "weights": [1, 2, 1], "upper": 2 }"#,
            r#"{ "kind": "truncated_exponential", "mean": 1, "upper": 2 }, "grid_size": 10"#,
        );
        assert!(ExperimentConfig::from_json(&text).is_err());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = EXPLICIT.replace(r#""class": "I""#, r#""class": "I", "colour": 1"#);
        assert!(ExperimentConfig::from_json(&text).is_err());
    }
}
