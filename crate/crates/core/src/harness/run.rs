//! Experiment pipeline and CSV output.

use std::path::Path;

use serde::Serialize;

use super::config::ExperimentConfig;
use crate::analytic::{
    best_fit_deductible, certainty_equivalents, solve_deductible, verify_marginal_kkt, CertaintyEquivalents,
    ContractForm,
};
use crate::contract::{scp_solve, SaddleProblem, SaddleResult, ScpOptions, TraceRow};
use crate::error::{Error, Result};
use crate::metrics::fsd_margin;
use crate::model::{check_feasible, insurer_participation_slack, FeasibilityClass, PARTICIPATION_TOL};
use crate::par::{self, Execution};

/// Allowed rise between consecutive outer values.
pub const TRACE_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ContractRow {
    pub x: f64,
    pub y: f64,
    pub r: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CdfRow {
    pub x: f64,
    #[serde(rename = "F_q")]
    pub f_q: f64,
    #[serde(rename = "F_pstar")]
    pub f_pstar: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceCsvRow {
    pub iter: usize,
    pub outer_value: f64,
    pub inner_value: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CeRow {
    pub delta: f64,
    pub ce1: f64,
    pub ce2: f64,
}

/// Post-hoc checks of one solve against the analytic constructions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalyticChecks {
    /// Least-squares deductible fitted to the solver's indemnity.
    pub best_fit_deductible: f64,
    /// Sup-norm distance between the indemnity and that deductible.
    pub deductible_sup_error: f64,
    /// Deductible that exhausts the premium under the reference measure.
    pub reference_contract: ContractForm,
    /// `min (F_Q̂ − F_P*)`; nonnegative when the worst case dominates.
    pub fsd_margin: f64,
    /// Share of grid cells passing the marginal KKT check (class Î only).
    pub kkt_pass_fraction: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRecord {
    pub name: String,
    pub value: f64,
    pub inner_value: f64,
    pub trace: Vec<TraceRow>,
    pub contract: Vec<ContractRow>,
    pub worst_case_cdf: Vec<CdfRow>,
    pub ce_sweep: Vec<CeRow>,
    pub checks: AnalyticChecks,
}

/// One radius of a sweep.
#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub delta: f64,
    pub result: SaddleResult,
    pub ce: CertaintyEquivalents,
}

/// Solves the problem at each radius, in parallel when allowed. Points come
/// back sorted by radius.
pub fn sweep_delta(
    problem: &SaddleProblem,
    deltas: &[f64],
    opts: &ScpOptions,
    exec: Execution,
) -> Result<Vec<SweepPoint>> {
    let mut sorted = deltas.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    par::map(&sorted, exec, |&delta| {
        let result = scp_solve(&problem.with_radius(delta), opts)?;
        let ce = certainty_equivalents(&result)?;
        Ok(SweepPoint { delta, result, ce })
    })
    .into_iter()
    .collect()
}

/// Analytic cross-checks for a converged result.
pub fn analytic_checks(result: &SaddleResult) -> Result<AnalyticChecks> {
    let p = &result.problem;
    let x = p.grid.points();
    let y = result.indemnity.values();
    let d = best_fit_deductible(&p.grid, y)?;
    let sup = x
        .iter()
        .zip(y)
        .map(|(xi, yi)| (yi - (xi - d).max(0.0)).abs())
        .fold(0.0, f64::max);
    let kkt_pass_fraction = if p.class == FeasibilityClass::NoSabotage {
        let qw = p.reference.node_weights();
        let pw = result.worst_case.node_weights();
        let xi: Vec<f64> = pw
            .iter()
            .zip(&qw)
            .map(|(a, b)| if *b > 0.0 { a / b } else { 0.0 })
            .collect();
        let report = verify_marginal_kkt(
            &result.indemnity,
            result.participation_multiplier,
            &xi,
            &p.grid,
            &p.wealth,
            &p.u,
            &p.v,
            &p.reference,
        )?;
        Some(report.pass_fraction())
    } else {
        None
    };
    Ok(AnalyticChecks {
        best_fit_deductible: d,
        deductible_sup_error: sup,
        reference_contract: solve_deductible(&p.reference, &p.grid, &p.wealth)?,
        fsd_margin: fsd_margin(&result.worst_case, &p.reference)?,
        kkt_pass_fraction,
    })
}

/// Invariants every emitted run must satisfy.
pub fn check_run_invariants(result: &SaddleResult) -> Result<()> {
    let p = &result.problem;
    if let Some(v) = check_feasible(&result.indemnity, &p.grid, p.class)?.violation {
        return Err(Error::Invariant(format!("indemnity infeasible: {v:?}")));
    }
    let slack = insurer_participation_slack(&result.indemnity, &p.grid, &p.wealth, &p.v, &p.reference)?;
    if slack < -PARTICIPATION_TOL {
        return Err(Error::Invariant(format!("participation slack {slack}")));
    }
    if result.max_value_increase() > TRACE_TOL {
        return Err(Error::Invariant(format!(
            "outer values rose by {}",
            result.max_value_increase()
        )));
    }
    Ok(())
}

pub fn record_of(name: &str, result: &SaddleResult, sweep: &[SweepPoint]) -> Result<RunRecord> {
    let p = &result.problem;
    let x = p.grid.points();
    let contract = x
        .iter()
        .zip(result.indemnity.values())
        .map(|(&x, &y)| ContractRow { x, y, r: x - y })
        .collect();
    let fq = p.reference.cdf_values();
    let fp = result.worst_case.cdf_values();
    let worst_case_cdf = (0..x.len())
        .map(|i| CdfRow {
            x: x[i],
            f_q: fq[i],
            f_pstar: fp[i],
        })
        .collect();
    Ok(RunRecord {
        name: name.to_string(),
        value: result.value,
        inner_value: result.inner_value,
        trace: result.trace.clone(),
        contract,
        worst_case_cdf,
        ce_sweep: sweep
            .iter()
            .map(|s| CeRow {
                delta: s.delta,
                ce1: s.ce.ce1,
                ce2: s.ce.ce2,
            })
            .collect(),
        checks: analytic_checks(result)?,
    })
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `contract.csv`, `worst_case_cdf.csv`, `trace.csv`, `summary.json`,
/// and `ce_sweep.csv` when the record has sweep rows.
pub fn write_record(record: &RunRecord, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_csv(&dir.join("contract.csv"), &record.contract)?;
    write_csv(&dir.join("worst_case_cdf.csv"), &record.worst_case_cdf)?;
    let trace: Vec<TraceCsvRow> = record
        .trace
        .iter()
        .map(|t| TraceCsvRow {
            iter: t.iter,
            outer_value: t.outer_value,
            inner_value: t.inner_value,
            gap: t.gap,
        })
        .collect();
    write_csv(&dir.join("trace.csv"), &trace)?;
    if !record.ce_sweep.is_empty() {
        write_ce_sweep(&record.ce_sweep, dir)?;
    }
    #[derive(Serialize)]
    struct Summary<'a> {
        name: &'a str,
        value: f64,
        inner_value: f64,
        rounds: usize,
        checks: &'a AnalyticChecks,
    }
    let summary = Summary {
        name: &record.name,
        value: record.value,
        inner_value: record.inner_value,
        rounds: record.trace.len(),
        checks: &record.checks,
    };
    std::fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&summary)? + "\n")?;
    Ok(())
}

pub fn write_ce_sweep(rows: &[CeRow], dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_csv(&dir.join("ce_sweep.csv"), rows)
}

/// Sample, solve, cross-check, optionally sweep the radius, and write the
/// outputs to `dir`. Files are written before invariants are enforced, so a
/// failing run still leaves its data behind.
pub fn run_experiment(cfg: &ExperimentConfig, dir: &Path, exec: Execution) -> Result<RunRecord> {
    let problem = cfg.build_problem()?;
    let opts = cfg.scp_options();
    let result = scp_solve(&problem, &opts)?;
    let sweep = if cfg.sweep_deltas.is_empty() {
        Vec::new()
    } else {
        sweep_delta(&problem, &cfg.sweep_deltas, &opts, exec)?
    };
    let record = record_of(cfg.label(), &result, &sweep)?;
    write_record(&record, dir)?;
    check_run_invariants(&result)?;
    for s in &sweep {
        check_run_invariants(&s.result)?;
    }
    Ok(record)
}
