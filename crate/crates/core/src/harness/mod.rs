//! Experiment plumbing: loss sampling, grid sizing, the brute-force saddle
//! oracle, configuration files, and CSV output.

pub mod config;
pub mod grid;
pub mod oracle;
pub mod run;
pub mod sampling;

pub use config::{ExperimentConfig, SolverOverrides, OUTPUT_DIR_ENV};
pub use grid::{choose_grid_size, curvature_bound, trapezoid_error};
pub use oracle::{
    brute_force_saddle, oracle_check, BruteForceOptions, BruteForceResult, OracleFixture, OracleReport, MAX_ATOMS,
    ORACLE_TOL,
};
pub use run::{
    analytic_checks, check_run_invariants, record_of, run_experiment, sweep_delta, write_ce_sweep, write_record,
    AnalyticChecks, CdfRow, CeRow, ContractRow, RunRecord, SweepPoint, TraceCsvRow, TRACE_TOL,
};
pub use sampling::{sample_empirical_cdf, sample_empirical_pmf, LossModel};
