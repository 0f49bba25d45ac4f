use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use meu_insurance::analytic::{build_linear_linear_contract, calibrate_lambda, solve_deductible, ContractForm};
use meu_insurance::harness::{
    check_run_invariants, oracle_check, run_experiment, sweep_delta, write_ce_sweep, CeRow, ExperimentConfig,
    OracleFixture, OUTPUT_DIR_ENV,
};
use meu_insurance::model::{Measure, UtilitySpec};
use meu_insurance::par::Execution;
use meu_insurance::Error;

#[derive(Parser)]
#[command(name = "meu-insurance", version, about = "Robust optimal insurance contracts")]
#[command(after_help = format!("Output goes to ${OUTPUT_DIR_ENV} if set, else the config's output_dir, else ./out."))]
struct Cli {
    /// Run independent work items one at a time.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the saddle problem and write contract, cdf and trace tables.
    Solve { config: PathBuf },
    /// Closed-form contracts at the reference measure.
    Analytic { config: PathBuf },
    /// Solve at several radii and write certainty equivalents.
    SweepDelta {
        config: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        deltas: Vec<f64>,
    },
    /// Compare the saddle solver with exhaustive search on a small fixture.
    OracleCheck { fixture: PathBuf },
    /// Write the sampled reference distribution.
    Sample { config: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let exec = if cli.sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    };
    match run(cli.command, exec) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Invariant(_) => 2,
        Error::NoConvergence { .. } | Error::IterationCap { .. } => 3,
        _ => 1,
    }
}

fn run(command: Command, exec: Execution) -> meu_insurance::Result<()> {
    match command {
        Command::Solve { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            let dir = cfg.output_dir();
            let record = run_experiment(&cfg, &dir, exec)?;
            println!(
                "{}: value {:.10} (inner {:.10}) after {} rounds; best-fit deductible {:.4}; wrote {}",
                record.name,
                record.value,
                record.inner_value,
                record.trace.len(),
                record.checks.best_fit_deductible,
                dir.display()
            );
            Ok(())
        }
        Command::Analytic { config } => analytic(&ExperimentConfig::load(&config)?),
        Command::SweepDelta { config, deltas } => {
            let cfg = ExperimentConfig::load(&config)?;
            let problem = cfg.build_problem()?;
            let points = sweep_delta(&problem, &deltas, &cfg.scp_options(), exec)?;
            let rows: Vec<CeRow> = points
                .iter()
                .map(|p| CeRow {
                    delta: p.delta,
                    ce1: p.ce.ce1,
                    ce2: p.ce.ce2,
                })
                .collect();
            let dir = cfg.output_dir();
            write_ce_sweep(&rows, &dir)?;
            for r in &rows {
                println!("delta {:.4}: ce1 {:.6} ce2 {:.6}", r.delta, r.ce1, r.ce2);
            }
            for p in &points {
                check_run_invariants(&p.result)?;
            }
            Ok(())
        }
        Command::OracleCheck { fixture } => {
            let f = OracleFixture::load(&fixture)?;
            let report = oracle_check(&f, exec)?;
            println!(
                "{}: scp {:.8} brute force {:.8} difference {:.2e} (tolerance {:.0e}) {}",
                report.name,
                report.scp_value,
                report.brute_force_value,
                report.difference,
                report.tolerance,
                if report.pass { "PASS" } else { "FAIL" }
            );
            if report.pass {
                Ok(())
            } else {
                Err(Error::Invariant(format!(
                    "saddle value differs from brute force by {:.3e}",
                    report.difference
                )))
            }
        }
        Command::Sample { config } => sample(&ExperimentConfig::load(&config)?),
    }
}

fn create_dir(dir: &Path) -> meu_insurance::Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))
}

fn sample(cfg: &ExperimentConfig) -> meu_insurance::Result<()> {
    let (grid, reference) = cfg.reference()?;
    let dir = cfg.output_dir();
    create_dir(&dir)?;
    let path = dir.join("reference.csv");
    let mut out = String::from("x,F_q,q\n");
    let cdf = reference.cdf_values();
    let w = reference.node_weights();
    for i in 0..grid.len() {
        out.push_str(&format!("{},{},{}\n", grid.points()[i], cdf[i], w[i]));
    }
    std::fs::write(&path, out)?;
    println!("{} knots; wrote {}", grid.len(), path.display());
    Ok(())
}

#[derive(Serialize)]
struct AnalyticSummary {
    /// Deductible exhausting the premium under the reference measure.
    deductible: ContractForm,
    /// Class-I pointwise first-order contract at the reference measure.
    foc_multiplier: f64,
    foc_contract: ContractForm,
    /// Linear-linear contract at the reference measure (pmf references only).
    linear_linear: Option<ContractForm>,
}

fn analytic(cfg: &ExperimentConfig) -> meu_insurance::Result<()> {
    let problem = cfg.build_problem()?;
    let grid = &problem.grid;
    let reference = &problem.reference;
    let deductible = solve_deductible(reference, grid, &problem.wealth)?;
    let ones = vec![1.0; grid.len()];
    let (foc_multiplier, foc_contract) =
        calibrate_lambda(&ones, grid, &problem.wealth, &problem.u, &problem.v, reference)?;
    let linear_linear = match (reference, problem.u, problem.v) {
        (Measure::Pmf(q), UtilitySpec::Linear, UtilitySpec::Linear) => Some(build_linear_linear_contract(
            q,
            q,
            grid,
            &problem.wealth,
            problem.class,
        )?),
        _ => None,
    };
    let dir = cfg.output_dir();
    create_dir(&dir)?;
    let y = foc_contract.values_on(grid)?;
    let mut table = String::from("x,y,r\n");
    for (x, y) in grid.points().iter().zip(&y) {
        table.push_str(&format!("{},{},{}\n", x, y, x - y));
    }
    std::fs::write(dir.join("analytic_contract.csv"), table)?;
    let summary = AnalyticSummary {
        deductible,
        foc_multiplier,
        foc_contract,
        linear_linear,
    };
    std::fs::write(
        dir.join("analytic.json"),
        serde_json::to_string_pretty(&summary).map_err(Error::from)? + "\n",
    )?;
    println!(
        "deductible {:?}; first-order multiplier {:.6}; wrote {}",
        summary.deductible,
        summary.foc_multiplier,
        dir.display()
    );
    Ok(())
}
