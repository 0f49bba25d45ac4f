//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any criterion fails other than those listed in
//! `KNOWN_RED`.

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use meu_insurance::analytic::{
    best_fit_deductible, build_linear_linear_contract, build_prop41_contract, calibrate_lambda, solve_deductible,
    verify_marginal_kkt, ContractForm,
};
use meu_insurance::contract::{saddle_gap, scp_solve, OuterOptions, SaddleProblem, SaddleResult};
use meu_insurance::harness::{
    choose_grid_size, oracle_check, sweep_delta, trapezoid_error, ExperimentConfig, OracleFixture, SweepPoint,
};
use meu_insurance::metrics::{fsd_margin, renyi_divergence, wasserstein_pwl};
use meu_insurance::model::{
    check_feasible, DiscretePmf, FeasibilityClass, LossGrid, Measure, PiecewiseLinearCdf, UtilitySpec, WealthConfig,
};
use meu_insurance::par::{self, Execution};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// Tolerances and limits, one per criterion.
const SEEDS: [u64; 5] = [1, 2, 3, 4, 5];
const DEDUCTIBLE_RANGE: (f64, f64) = (6.1, 9.1);
const SUP_SHARE_OF_M: f64 = 0.02;
const SEED_TIME_LIMIT: Duration = Duration::from_secs(120);
const FSD_TOL: f64 = 1e-6;
const SWEEP: [f64; 7] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7];
const CE_TOL: f64 = 1e-6;
const SWEEP_TIME_LIMIT: Duration = Duration::from_secs(600);
const CLASS_VALUE_TOL: f64 = 1e-7;
const TRACE_TOL: f64 = 1e-8;
const GAP_TOL: f64 = 1e-5;
const ORACLE_TIME_LIMIT: Duration = Duration::from_secs(300);
const DEDUCTIBLE_TOL: f64 = 1e-8;
const VALUE_MATCH_TOL: f64 = 1e-7;
const GRID_RANGE: (usize, usize) = (190, 210);
const GRID_TARGET: f64 = 1e-4;
const QUADRATURE_CELLS: usize = 100_000;
const RETENTIONS: usize = 20;
const METRIC_TOL: f64 = 1e-9;
const TRIPLES: usize = 500;
const PAIRS: usize = 200;
const KKT_PASS_SHARE: f64 = 0.95;
const KKT_SWITCH_CELLS: usize = 3;

/// Criteria that cannot be met as stated; see the decisions ledger. The
/// grid-size bound with the stated constants gives n = 482.
const KNOWN_RED: &[usize] = &[8];

struct Outcome {
    id: usize,
    pass: bool,
    detail: String,
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn load(name: &str) -> ExperimentConfig {
    ExperimentConfig::load(&configs().join(name)).expect("bundled config")
}

fn with_seed(cfg: &ExperimentConfig, seed: u64) -> ExperimentConfig {
    ExperimentConfig {
        seed: Some(seed),
        ..cfg.clone()
    }
}

/// Largest decrease of the outer value sequence is not checked here; this
/// collects every run for the trace criterion.
struct Runs(Vec<(String, SaddleResult)>);

fn gpd_runs(cfg: &ExperimentConfig) -> Vec<(u64, SaddleResult, Duration)> {
    par::map(&SEEDS, Execution::Parallel, |&seed| {
        let c = with_seed(cfg, seed);
        let problem = c.build_problem().unwrap();
        let t = Instant::now();
        let r = scp_solve(&problem, &c.scp_options()).unwrap();
        (seed, r, t.elapsed())
    })
}

fn criterion_1(runs: &[(u64, SaddleResult, Duration)]) -> Outcome {
    let mut pass = true;
    let mut ds = Vec::new();
    let mut worst_sup: f64 = 0.0;
    let mut slowest = Duration::ZERO;
    let mut limit = 0.0;
    for (seed, r, t) in runs {
        let p = &r.problem;
        let x = p.grid.points();
        let y = r.indemnity.values();
        let d = best_fit_deductible(&p.grid, y).unwrap();
        let sup = x.iter().zip(y).map(|(xi, yi)| (yi - (xi - d).max(0.0)).abs()).fold(0.0, f64::max);
        limit = SUP_SHARE_OF_M * p.grid.upper_bound();
        let ok = d >= DEDUCTIBLE_RANGE.0 && d <= DEDUCTIBLE_RANGE.1 && sup <= limit && *t <= SEED_TIME_LIMIT;
        if !ok {
            eprintln!("  seed {seed}: d* = {d:.3}, sup = {sup:.3}, {t:.1?}");
        }
        pass &= ok;
        ds.push(d);
        worst_sup = worst_sup.max(sup);
        slowest = slowest.max(*t);
    }
    let lo = ds.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = ds.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Outcome {
        id: 1,
        pass,
        detail: format!(
            "deductible reproduction: d* in [{lo:.2}, {hi:.2}] over {} seeds, max deviation {worst_sup:.2} <= {limit:.2}, slowest seed {slowest:.1?}",
            runs.len()
        ),
    }
}

fn criterion_2(gpd: &[(u64, SaddleResult, Duration)], sweep: &[SweepPoint]) -> Outcome {
    let margins: Vec<f64> = gpd
        .iter()
        .map(|(_, r, _)| fsd_margin(&r.worst_case, &r.problem.reference).unwrap())
        .chain(sweep.iter().map(|s| fsd_margin(&s.result.worst_case, &s.result.problem.reference).unwrap()))
        .collect();
    let worst = margins.iter().cloned().fold(f64::INFINITY, f64::min);
    Outcome {
        id: 2,
        pass: worst >= -FSD_TOL,
        detail: format!(
            "worst case dominates the reference: min slack {worst:.2e} over {} runs (Wasserstein and Renyi)",
            margins.len()
        ),
    }
}

fn criterion_3(sweep: &[SweepPoint], elapsed: Duration) -> Outcome {
    let ce1: Vec<f64> = sweep.iter().map(|s| s.ce.ce1).collect();
    let ce2: Vec<f64> = sweep.iter().map(|s| s.ce.ce2).collect();
    let up = ce1.windows(2).all(|w| w[1] >= w[0] - CE_TOL);
    let down = ce2.windows(2).all(|w| w[1] <= w[0] + CE_TOL);
    Outcome {
        id: 3,
        pass: up && down && sweep.len() == SWEEP.len() && elapsed <= SWEEP_TIME_LIMIT,
        detail: format!(
            "certainty equivalents over delta 0.1..0.7: ce1 {:.3} -> {:.3} (nondecreasing {up}), ce2 {:.3} -> {:.3} (nonincreasing {down}), {elapsed:.1?}",
            ce1[0],
            ce1[ce1.len() - 1],
            ce2[0],
            ce2[ce2.len() - 1]
        ),
    }
}

fn criterion_4(cfg: &ExperimentConfig, runs: &mut Runs) -> Outcome {
    // Values are compared at 1e-7, so both solves stop well inside that.
    let mut opts = cfg.scp_options();
    opts.stop_tol = 1e-9;
    let hat_problem = cfg.build_problem().unwrap();
    let basic_problem = hat_problem.with_class(FeasibilityClass::Basic);
    let hat = scp_solve(&hat_problem, &opts).unwrap();
    let basic = scp_solve(&basic_problem, &opts).unwrap();
    let yb = basic.indemnity.values();
    let drops = yb.windows(2).filter(|w| w[1] < w[0] - 1e-6).count();
    let hat_ok = check_feasible(&hat.indemnity, &hat_problem.grid, FeasibilityClass::NoSabotage)
        .unwrap()
        .feasible()
        && hat.indemnity.values().windows(2).all(|w| w[1] >= w[0] - 1e-9);
    let diff = basic.value - hat.value;
    let pass = drops >= 1 && hat_ok && diff >= -CLASS_VALUE_TOL;
    runs.0.push(("class I".into(), basic));
    runs.0.push(("class I_hat (tight)".into(), hat));
    Outcome {
        id: 4,
        pass,
        detail: format!(
            "no-sabotage contrast: class I has {drops} decreasing segments, class I_hat monotone {hat_ok}, value(I) - value(I_hat) = {diff:.2e}"
        ),
    }
}

fn criterion_5(runs: &Runs) -> Outcome {
    let mut worst_rise = f64::NEG_INFINITY;
    let mut worst_gap: f64 = 0.0;
    for (_, r) in &runs.0 {
        worst_rise = worst_rise.max(r.max_value_increase());
        let g = saddle_gap(r, &OuterOptions::default()).unwrap();
        worst_gap = worst_gap.max(g.abs());
    }
    Outcome {
        id: 5,
        pass: worst_rise <= TRACE_TOL && worst_gap <= GAP_TOL,
        detail: format!(
            "monotone traces: largest outer-value rise {worst_rise:.2e}, largest |saddle gap| {worst_gap:.2e} over {} runs",
            runs.0.len()
        ),
    }
}

fn criterion_6() -> Outcome {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/oracle");
    let mut paths: Vec<PathBuf> = std::fs::read_dir(&dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    paths.sort();
    let t = Instant::now();
    let reports = par::map(&paths, Execution::Parallel, |p| {
        oracle_check(&OracleFixture::load(p).unwrap(), Execution::Sequential).unwrap()
    });
    let elapsed = t.elapsed();
    let worst = reports.iter().map(|r| r.difference).fold(0.0, f64::max);
    for r in reports.iter().filter(|r| !r.pass) {
        eprintln!("  {}: difference {:.2e}", r.name, r.difference);
    }
    Outcome {
        id: 6,
        pass: reports.len() == 10 && reports.iter().all(|r| r.pass) && elapsed <= ORACLE_TIME_LIMIT,
        detail: format!(
            "oracle equivalence: {} fixtures, largest |scp - brute force| {worst:.2e}, {elapsed:.1?}",
            reports.len()
        ),
    }
}

fn criterion_7(renyi_reference: &SaddleProblem) -> Outcome {
    // (a) Uniform losses on [0, 100]: (1+ρ)(100 − d)²/200 = Π₀.
    let grid = LossGrid::new(vec![0.0, 100.0], 100.0).unwrap();
    let uniform = Measure::Cdf(PiecewiseLinearCdf::uniform(&grid));
    let cfg = WealthConfig::new(200.0, 400.0, 6.0, 0.2).unwrap();
    let d = match solve_deductible(&uniform, &grid, &cfg).unwrap() {
        ContractForm::Deductible { d } => d,
        other => panic!("unexpected {other:?}"),
    };
    let err_a = (d - (100.0 - 1000f64.sqrt())).abs();
    let a = err_a <= DEDUCTIBLE_TOL;

    // (b) Concave distortion of five atoms: increasing likelihood ratio.
    let grid = LossGrid::new(vec![1.0, 2.0, 4.0, 6.0, 10.0], 10.0).unwrap();
    let q = DiscretePmf::new(vec![0.3, 0.25, 0.2, 0.15, 0.1]).unwrap();
    let tail: Vec<f64> = (0..5).map(|i| q.weights()[i..].iter().sum::<f64>().sqrt()).collect();
    let p = DiscretePmf::normalized((0..5).map(|i| tail[i] - tail.get(i + 1).unwrap_or(&0.0)).collect()).unwrap();
    let cfg = WealthConfig::new(20.0, 50.0, 1.0, 0.2).unwrap();
    let form = build_linear_linear_contract(&p, &q, &grid, &cfg, FeasibilityClass::NoSabotage).unwrap();
    let b = match form {
        ContractForm::Deductible { d } => {
            let y = form.materialize(&grid, FeasibilityClass::NoSabotage).unwrap();
            let k = grid.points().iter().position(|&x| x >= d).unwrap();
            let lambda = p.weights()[k..].iter().sum::<f64>() / q.weights()[k..].iter().sum::<f64>() / 1.2;
            let xi: Vec<f64> = p.weights().iter().zip(q.weights()).map(|(a, b)| a / b).collect();
            let lin = UtilitySpec::Linear;
            verify_marginal_kkt(&y, lambda, &xi, &grid, &cfg, &lin, &lin, &Measure::Pmf(q.clone()))
                .unwrap()
                .all_pass()
        }
        _ => false,
    };

    // (c) Pointwise first-order contract at p* = q on the Renyi example sample.
    let rp = renyi_reference;
    let qpmf = rp.reference.as_pmf().unwrap();
    let prop = build_prop41_contract(qpmf, qpmf, &rp.grid, &rp.wealth, &rp.u).unwrap();
    let ones = vec![1.0; rp.grid.len()];
    let (_, cal) = calibrate_lambda(&ones, &rp.grid, &rp.wealth, &rp.u, &UtilitySpec::Linear, &rp.reference).unwrap();
    let value = |f: &ContractForm| -> f64 {
        let y = f.values_on(&rp.grid).unwrap();
        let x = rp.grid.points();
        (0..x.len())
            .map(|i| qpmf.weights()[i] * rp.u.value(rp.wealth.buyer_wealth(x[i], y[i])).unwrap())
            .sum()
    };
    let err_c = (value(&prop) - value(&cal)).abs();
    let c = err_c <= VALUE_MATCH_TOL;
    Outcome {
        id: 7,
        pass: a && b && c,
        detail: format!(
            "analytic cross-checks: uniform deductible error {err_a:.1e}, distortion deductible passes KKT {b}, first-order contracts differ by {err_c:.1e} in value"
        ),
    }
}

fn criterion_8(gpd: &ExperimentConfig) -> Outcome {
    let u = UtilitySpec::cara(0.03).unwrap();
    let cfg = WealthConfig::new(250.0, 250.0, 4.0, 0.2).unwrap();
    let n = choose_grid_size(&u, &cfg, 246.0, GRID_TARGET).unwrap();
    let a = n >= GRID_RANGE.0 && n <= GRID_RANGE.1;

    let problem = gpd.build_problem().unwrap();
    let f = problem.reference.as_cdf().unwrap();
    let x = problem.grid.points();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst: f64 = 0.0;
    for _ in 0..RETENTIONS {
        // Random no-sabotage retention: slopes in [0, 1] from r(0) = 0.
        let mut r = vec![0.0; x.len()];
        for i in 1..x.len() {
            r[i] = r[i - 1] + rng.random::<f64>() * (x[i] - x[i - 1]);
        }
        let e = trapezoid_error(&problem.grid, f, &r, &problem.wealth, &problem.u, QUADRATURE_CELLS).unwrap();
        worst = worst.max(e);
    }
    let b = worst <= GRID_TARGET;
    Outcome {
        id: 8,
        pass: a && b,
        detail: format!(
            "grid size: bound gives n = {n} (target range {}..{}: {a}); trapezoid error at n = {} over {RETENTIONS} retentions {worst:.2e} <= {GRID_TARGET:.0e}: {b}",
            GRID_RANGE.0,
            GRID_RANGE.1,
            x.len()
        ),
    }
}

fn random_cdf(rng: &mut ChaCha8Rng, grid: &LossGrid) -> PiecewiseLinearCdf {
    let w: Vec<f64> = (0..grid.len()).map(|_| rng.random::<f64>()).collect();
    let total: f64 = w.iter().sum();
    let mut acc = 0.0;
    let mut v: Vec<f64> = w.iter().map(|wi| {
        acc += wi / total;
        acc
    })
    .collect();
    *v.last_mut().unwrap() = 1.0;
    PiecewiseLinearCdf::new(grid, v).unwrap()
}

fn criterion_9() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut w_ok = true;
    for _ in 0..TRIPLES {
        let n = rng.random_range(2..30);
        let mut x = vec![0.0];
        for _ in 1..n {
            x.push(x.last().unwrap() + rng.random_range(0.05..5.0));
        }
        let grid = LossGrid::new(x.clone(), *x.last().unwrap()).unwrap();
        let (a, b, c) = (random_cdf(&mut rng, &grid), random_cdf(&mut rng, &grid), random_cdf(&mut rng, &grid));
        let ab = wasserstein_pwl(&a, &b).unwrap();
        let ba = wasserstein_pwl(&b, &a).unwrap();
        let ac = wasserstein_pwl(&a, &c).unwrap();
        let bc = wasserstein_pwl(&b, &c).unwrap();
        let aa = wasserstein_pwl(&a, &a).unwrap();
        w_ok &= (ab - ba).abs() <= METRIC_TOL && ac <= ab + bc + METRIC_TOL && aa.abs() <= METRIC_TOL;
        w_ok &= a == b || ab > 0.0;
    }
    let mut r_ok = true;
    for _ in 0..PAIRS {
        let n = rng.random_range(2..20);
        let pmf = |rng: &mut ChaCha8Rng| {
            DiscretePmf::normalized((0..n).map(|_| rng.random_range(0.01..1.0)).collect()).unwrap()
        };
        let (p, q) = (pmf(&mut rng), pmf(&mut rng));
        let a1 = rng.random_range(1.05..4.0);
        let a2 = a1 + rng.random_range(0.01..4.0);
        let d1 = renyi_divergence(&p, &q, a1).unwrap();
        let d2 = renyi_divergence(&p, &q, a2).unwrap();
        r_ok &= d1 >= 0.0 && d2 >= d1 - METRIC_TOL;
    }
    Outcome {
        id: 9,
        pass: w_ok && r_ok,
        detail: format!(
            "metric properties: Wasserstein symmetry/triangle/identity on {TRIPLES} triples {w_ok}; Renyi nonnegativity and order monotonicity on {PAIRS} pairs {r_ok}"
        ),
    }
}

fn criterion_10(sweep: &[SweepPoint]) -> Outcome {
    let mut pass = true;
    let mut lowest: f64 = 1.0;
    for s in sweep {
        let r = &s.result;
        let p = &r.problem;
        let qw = p.reference.node_weights();
        let pw = r.worst_case.node_weights();
        let xi: Vec<f64> = pw.iter().zip(&qw).map(|(a, b)| if *b > 0.0 { a / b } else { 0.0 }).collect();
        let report = verify_marginal_kkt(
            &r.indemnity,
            r.participation_multiplier,
            &xi,
            &p.grid,
            &p.wealth,
            &p.u,
            &p.v,
            &p.reference,
        )
        .unwrap();
        let share = report.pass_fraction();
        lowest = lowest.min(share);
        pass &= share >= KKT_PASS_SHARE && report.failures_near_switches(KKT_SWITCH_CELLS);
    }
    Outcome {
        id: 10,
        pass,
        detail: format!(
            "marginal KKT on {} converged Renyi runs: lowest pass share {lowest:.3}, failures within {KKT_SWITCH_CELLS} cells of a switch",
            sweep.len()
        ),
    }
}

fn main() {
    // `cargo test` passes harness flags such as `--nocapture` or a filter;
    // none apply here.
    let gpd = load("gpd-wasserstein.json");
    let renyi = load("exponential-renyi.json");
    let mut runs = Runs(Vec::new());
    let mut outcomes = Vec::new();

    let gpd_results = gpd_runs(&gpd);
    outcomes.push(criterion_1(&gpd_results));

    let renyi_problem = renyi.build_problem().unwrap();
    let t = Instant::now();
    let sweep = sweep_delta(&renyi_problem, &SWEEP, &renyi.scp_options(), Execution::Parallel).unwrap();
    let sweep_time = t.elapsed();

    outcomes.push(criterion_2(&gpd_results, &sweep));
    outcomes.push(criterion_3(&sweep, sweep_time));
    outcomes.push(criterion_4(&with_seed(&gpd, 1), &mut runs));
    for (seed, r, _) in &gpd_results {
        runs.0.push((format!("Wasserstein seed {seed}"), r.clone()));
    }
    for s in &sweep {
        runs.0.push((format!("Renyi delta {}", s.delta), s.result.clone()));
    }
    outcomes.push(criterion_5(&runs));
    outcomes.push(criterion_6());
    outcomes.push(criterion_7(&renyi_problem));
    outcomes.push(criterion_8(&gpd));
    outcomes.push(criterion_9());
    outcomes.push(criterion_10(&sweep));

    outcomes.sort_by_key(|o| o.id);
    let mut unexpected = Vec::new();
    for o in &outcomes {
        println!("{} criterion {:>2}: {}", if o.pass { "PASS" } else { "FAIL" }, o.id, o.detail);
        if !o.pass && !KNOWN_RED.contains(&o.id) {
            unexpected.push(o.id);
        }
    }
    let red: Vec<usize> = outcomes.iter().filter(|o| !o.pass).map(|o| o.id).collect();
    println!(
        "{} of {} criteria pass; failing: {:?}; known unattainable: {:?}",
        outcomes.len() - red.len(),
        outcomes.len(),
        red,
        KNOWN_RED
    );
    if !unexpected.is_empty() {
        eprintln!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}
