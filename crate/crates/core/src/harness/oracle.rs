//! Exhaustive max-min over a discretized product of indemnities and
//! measures. Used as an oracle for the saddle solver on tiny grids.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use crate::contract::{scp_solve, SaddleProblem};
use crate::error::{Error, Result};
use crate::metrics::MEMBERSHIP_TOL;
use crate::model::{
    check_feasible, insurer_participation_slack, node_utilities, DiscretePmf, IndemnitySchedule, Measure,
    PiecewiseLinearCdf, PARTICIPATION_TOL,
};
use crate::par::{self, Execution};

/// Default agreement required between the saddle solver and the oracle.
pub const ORACLE_TOL: f64 = 5e-3;

/// A small instance with its lattice resolution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleFixture {
    pub experiment: ExperimentConfig,
    pub y_step: f64,
    pub p_step: f64,
    #[serde(default = "default_tol")]
    pub tolerance: f64,
}

fn default_tol() -> f64 {
    ORACLE_TOL
}

impl OracleFixture {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        let f: OracleFixture = serde_json::from_str(&text)?;
        f.experiment.validate()?;
        Ok(f)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleReport {
    pub name: String,
    pub scp_value: f64,
    pub brute_force_value: f64,
    pub difference: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Solves a fixture both ways and compares the values.
pub fn oracle_check(fixture: &OracleFixture, exec: Execution) -> Result<OracleReport> {
    let problem = fixture.experiment.build_problem()?;
    let scp = scp_solve(&problem, &fixture.experiment.scp_options())?;
    let brute = brute_force_saddle(
        &problem,
        &BruteForceOptions {
            y_step: fixture.y_step,
            p_step: fixture.p_step,
            exec,
        },
    )?;
    let difference = (scp.value - brute.value).abs();
    Ok(OracleReport {
        name: fixture.experiment.label().to_string(),
        scp_value: scp.value,
        brute_force_value: brute.value,
        difference,
        tolerance: fixture.tolerance,
        pass: difference <= fixture.tolerance,
    })
}

/// Largest grid the oracle accepts.
pub const MAX_ATOMS: usize = 5;
/// Refuse enumerations with more indemnity candidates than this.
const MAX_CANDIDATES: usize = 20_000_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BruteForceOptions {
    /// Spacing of the indemnity lattice (each `yᵢ` also takes the value `xᵢ`).
    pub y_step: f64,
    /// Spacing of the probability lattice: masses (pmfs) or cdf increments
    /// above `F(x₁)` (cdfs) are multiples of this.
    pub p_step: f64,
    pub exec: Execution,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BruteForceResult {
    pub value: f64,
    pub indemnity: Vec<f64>,
    pub worst_case: Measure,
    /// Feasible indemnities and in-ball measures enumerated.
    pub indemnity_candidates: usize,
    pub measure_candidates: usize,
}

/// Best value of `max_y min_P E_P[u]` over the lattices.
///
/// Work is `O(|Y|·|P|)` with `|Y| ≤ Π(xᵢ/y_step + 2)` and `|P|` the number of
/// compositions of `1/p_step` into `n` parts, so roughly
/// `O((1/step)^{2n})`. Per indemnity the scan over measures stops as soon as
/// it falls below the best value found so far in the same batch, which
/// prunes without changing the result.
pub fn brute_force_saddle(problem: &SaddleProblem, opts: &BruteForceOptions) -> Result<BruteForceResult> {
    problem.validate()?;
    let n = problem.grid.len();
    if n > MAX_ATOMS {
        return Err(Error::invalid(format!(
            "brute force is limited to {MAX_ATOMS} atoms, got {n}"
        )));
    }
    if !(opts.y_step > 0.0) || !(opts.p_step > 0.0) || opts.p_step > 1.0 {
        return Err(Error::invalid("lattice steps must be positive (and p_step ≤ 1)"));
    }

    let measures = measure_lattice(problem, opts.p_step)?;
    let weights: Vec<Vec<f64>> = measures.iter().map(|m| m.node_weights()).collect();
    let indemnities = indemnity_lattice(problem, opts.y_step)?;
    if indemnities.is_empty() {
        return Err(Error::invalid("no lattice indemnity satisfies participation"));
    }

    let chunk = 256;
    let batches: Vec<&[Vec<f64>]> = indemnities.chunks(chunk).collect();
    let results = par::map(&batches, opts.exec, |batch| -> Result<(f64, usize)> {
        let mut best = (f64::NEG_INFINITY, 0);
        for (k, y) in batch.iter().enumerate() {
            let util = node_utilities(y, &problem.grid, &problem.wealth, &problem.u)?;
            let mut worst = f64::INFINITY;
            for w in &weights {
                let v: f64 = w.iter().zip(&util).map(|(a, b)| a * b).sum();
                worst = worst.min(v);
                if worst <= best.0 {
                    break;
                }
            }
            if worst > best.0 {
                best = (worst, k);
            }
        }
        Ok(best)
    });
    let mut best = (f64::NEG_INFINITY, 0);
    for (b, r) in results.into_iter().enumerate() {
        let (v, k) = r?;
        if v > best.0 {
            best = (v, b * chunk + k);
        }
    }

    let y = indemnities[best.1].clone();
    let util = node_utilities(&y, &problem.grid, &problem.wealth, &problem.u)?;
    let (arg, value) = weights
        .iter()
        .enumerate()
        .map(|(i, w)| (i, w.iter().zip(&util).map(|(a, b)| a * b).sum::<f64>()))
        .fold((0, f64::INFINITY), |acc, (i, v)| if v < acc.1 { (i, v) } else { acc });
    Ok(BruteForceResult {
        value,
        indemnity: y,
        worst_case: measures[arg].clone(),
        indemnity_candidates: indemnities.len(),
        measure_candidates: measures.len(),
    })
}

/// All ways of writing `total` as an ordered sum of `parts` nonnegative integers.
fn compositions(total: usize, parts: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = vec![0; parts];
    fn rec(i: usize, left: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if i + 1 == cur.len() {
            cur[i] = left;
            out.push(cur.clone());
            return;
        }
        for k in 0..=left {
            cur[i] = k;
            rec(i + 1, left - k, cur, out);
        }
    }
    rec(0, total, &mut cur, &mut out);
    out
}

/// In-ball lattice measures. Pmf masses are multiples of `step`. Cdfs are
/// parametrized by segment densities, so `F(x₁)` stays at the reference
/// value and the remaining mass is split in multiples of `step`.
fn measure_lattice(problem: &SaddleProblem, step: f64) -> Result<Vec<Measure>> {
    let n = problem.grid.len();
    let total = (1.0 / step).round() as usize;
    let mut out = vec![problem.reference.clone()];
    let parts = match problem.reference {
        Measure::Pmf(_) => n,
        Measure::Cdf(_) => n - 1,
    };
    for c in compositions(total, parts) {
        let mass: Vec<f64> = c.iter().map(|&k| k as f64 / total as f64).collect();
        let m = match &problem.reference {
            Measure::Pmf(_) => Measure::Pmf(DiscretePmf::normalized(mass)?),
            Measure::Cdf(f) => {
                let first = f.values()[0];
                let mut vals = Vec::with_capacity(n);
                let mut acc = 0.0;
                vals.push(first);
                for m in &mass {
                    acc += m;
                    vals.push(first + (1.0 - first) * acc);
                }
                vals[n - 1] = 1.0;
                Measure::Cdf(PiecewiseLinearCdf::new(&problem.grid, vals)?)
            }
        };
        match problem.ambiguity.ball_slack(&m, &problem.reference) {
            Ok(s) if s >= -MEMBERSHIP_TOL => out.push(m),
            Ok(_) | Err(Error::NotAbsolutelyContinuous { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

fn indemnity_lattice(problem: &SaddleProblem, step: f64) -> Result<Vec<Vec<f64>>> {
    let x = problem.grid.points();
    let axes: Vec<Vec<f64>> = x
        .iter()
        .map(|&xi| {
            let k = (xi / step).floor() as usize;
            let mut a: Vec<f64> = (0..=k).map(|j| j as f64 * step).filter(|&v| v < xi).collect();
            a.push(xi);
            a
        })
        .collect();
    let count = axes.iter().try_fold(1usize, |acc, a| acc.checked_mul(a.len()));
    if count.is_none_or(|c| c > MAX_CANDIDATES) {
        return Err(Error::invalid("indemnity lattice too fine for brute force"));
    }
    let mut out = Vec::new();
    let mut idx = vec![0usize; x.len()];
    loop {
        let y: Vec<f64> = idx.iter().zip(&axes).map(|(&i, a)| a[i]).collect();
        let s = IndemnitySchedule::from_values(y, problem.class);
        if check_feasible(&s, &problem.grid, problem.class)?.feasible()
            && insurer_participation_slack(&s, &problem.grid, &problem.wealth, &problem.v, &problem.reference)?
                >= -PARTICIPATION_TOL
        {
            out.push(s.values().to_vec());
        }
        let mut d = 0;
        loop {
            if d == idx.len() {
                return Ok(out);
            }
            idx[d] += 1;
            if idx[d] < axes[d].len() {
                break;
            }
            idx[d] = 0;
            d += 1;
        }
    }
}
