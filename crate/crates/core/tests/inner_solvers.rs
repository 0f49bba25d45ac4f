mod common;

use common::{cdf_on, grid_strategy, pmf_strategy};
use meu_insurance::ambiguity::{solve_inner_renyi, solve_inner_wasserstein};
use meu_insurance::metrics::{renyi_moment, wasserstein_pwl};
use meu_insurance::model::{DiscretePmf, LossGrid, Measure};
use proptest::prelude::*;

/// `Σ ωⱼ(F) uⱼ` with trapezoid node weights.
fn objective(f: &[f64], u: &[f64]) -> f64 {
    let n = f.len();
    let mut acc = (f[0] + 0.5 * (f[1] - f[0])) * u[0];
    for j in 1..n - 1 {
        acc += 0.5 * (f[j + 1] - f[j - 1]) * u[j];
    }
    acc + 0.5 * (f[n - 1] - f[n - 2]) * u[n - 1]
}

/// `∫|F − F̂|` and a subgradient with respect to the knot values.
fn distance_and_subgradient(x: &[f64], f: &[f64], fq: &[f64]) -> (f64, Vec<f64>) {
    let sgn = |v: f64| if v > 0.0 { 1.0 } else if v < 0.0 { -1.0 } else { 0.0 };
    let mut w = 0.0;
    let mut g = vec![0.0; f.len()];
    for i in 0..x.len() - 1 {
        let h = x[i + 1] - x[i];
        let (a, b) = (f[i] - fq[i], f[i + 1] - fq[i + 1]);
        if a * b >= 0.0 {
            w += 0.5 * h * (a.abs() + b.abs());
            g[i] += 0.5 * h * sgn(a);
            g[i + 1] += 0.5 * h * sgn(b);
        } else {
            // Two triangles: h·(a² + b²)/(2(|a| + |b|)).
            let s = a.abs() + b.abs();
            w += 0.5 * h * (a * a + b * b) / s;
            g[i] += 0.5 * h * (2.0 * a * s - (a * a + b * b) * sgn(a)) / (s * s);
            g[i + 1] += 0.5 * h * (2.0 * b * s - (a * a + b * b) * sgn(b)) / (s * s);
        }
    }
    (w, g)
}

/// Euclidean projection onto nondecreasing vectors in `[lo, hi]`: pool
/// adjacent violators, then clip.
fn project_monotone(v: &mut [f64], lo: f64, hi: f64) {
    let mut blocks: Vec<(f64, usize)> = Vec::new();
    for &x in v.iter() {
        blocks.push((x, 1));
        while blocks.len() > 1 && blocks[blocks.len() - 2].0 > blocks[blocks.len() - 1].0 {
            let (m2, c2) = blocks.pop().unwrap();
            let (m1, c1) = blocks.pop().unwrap();
            blocks.push(((m1 * c1 as f64 + m2 * c2 as f64) / (c1 + c2) as f64, c1 + c2));
        }
    }
    let mut k = 0;
    for (m, c) in blocks {
        for _ in 0..c {
            v[k] = m.clamp(lo, hi);
            k += 1;
        }
    }
}

/// `min_F Σω(F)u + μ·WD(F, F̂)` over cdfs with pinned ends, by projected
/// subgradient descent with normalized diminishing steps.
fn lagrangian_min(x: &[f64], fq: &[f64], u: &[f64], mu: f64, steps: usize) -> f64 {
    let n = fq.len();
    let mut f = fq.to_vec();
    let eval = |f: &[f64]| objective(f, u) + mu * distance_and_subgradient(x, f, fq).0;
    let mut best = eval(&f);
    for k in 0..steps {
        let (_, gw) = distance_and_subgradient(x, &f, fq);
        let mut g = vec![0.0; n];
        for j in 1..n - 1 {
            g[j] = 0.5 * (u[j - 1] - u[j + 1]) + mu * gw[j];
        }
        let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            break;
        }
        let step = 0.3 / ((k + 1) as f64).sqrt() / norm;
        let mut interior: Vec<f64> = (1..n - 1).map(|j| f[j] - step * g[j]).collect();
        project_monotone(&mut interior, fq[0], 1.0);
        f[1..n - 1].copy_from_slice(&interior);
        best = best.min(eval(&f));
    }
    best
}

/// Dual value `max_{μ≥0} min_F L(F, μ) − μδ`, golden section on a bracket
/// found by doubling.
fn wasserstein_oracle(x: &[f64], fq: &[f64], u: &[f64], delta: f64) -> f64 {
    let steps = 20_000;
    let dual = |mu: f64| lagrangian_min(x, fq, u, mu, steps) - mu * delta;
    let mut hi = 1.0;
    while dual(2.0 * hi) > dual(hi) && hi < 1e6 {
        hi *= 2.0;
    }
    let (mut a, mut b) = (0.0, 2.0 * hi);
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (dual(c), dual(d));
    for _ in 0..40 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = dual(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = dual(d);
        }
    }
    fc.max(fd).max(dual(0.0))
}

fn wasserstein_case() -> impl Strategy<Value = (LossGrid, Vec<f64>, Vec<f64>, f64)> {
    grid_strategy(3, 7).prop_flat_map(|grid| {
        let n = grid.len();
        (
            Just(grid),
            common::cdf_values(n),
            prop::collection::vec(0.0f64..1.0, n),
            0.02f64..0.6,
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn wasserstein_inner_matches_dual_subgradient((grid, fq, u, delta) in wasserstein_case()) {
        let x = grid.points().to_vec();
        let cdf = cdf_on(&grid, fq.clone());
        let sol = solve_inner_wasserstein(&u, &cdf, delta).unwrap();
        let worst = sol.measure.as_cdf().unwrap();
        prop_assert!(wasserstein_pwl(worst, &cdf).unwrap() <= delta + 1e-9);
        prop_assert!((worst.values()[0] - fq[0]).abs() <= 1e-12);
        prop_assert!((objective(worst.values(), &u) - sol.value).abs() <= 1e-12);
        let oracle = wasserstein_oracle(&x, &fq, &u, delta);
        // Subgradient descent leaves a bias of order 1e-4 on unit-scale
        // utilities; the barrier solution is accurate to 1e-8.
        prop_assert!((sol.value - oracle).abs() <= 5e-4, "barrier {} vs oracle {}", sol.value, oracle);
    }
}

/// Lattice minimum of `Σ pᵢuᵢ` over the Rényi ball on three atoms.
fn renyi_lattice_min(u: &[f64], q: &DiscretePmf, alpha: f64, delta: f64, total: usize) -> f64 {
    let bound = (delta * (alpha - 1.0)).exp();
    let mut best = f64::INFINITY;
    for i in 0..=total {
        for j in 0..=total - i {
            let p = [i as f64 / total as f64, j as f64 / total as f64, (total - i - j) as f64 / total as f64];
            if renyi_moment(&p, q.weights(), alpha).unwrap() <= bound {
                best = best.min(p.iter().zip(u).map(|(a, b)| a * b).sum());
            }
        }
    }
    best
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn renyi_inner_matches_simplex_lattice(
        q in pmf_strategy(3),
        u in prop::collection::vec(0.0f64..1.0, 3),
        alpha in 1.2f64..4.0,
        delta in 0.01f64..1.0,
    ) {
        let sol = solve_inner_renyi(&u, &q, alpha, delta).unwrap();
        let p = sol.measure.as_pmf().unwrap();
        let bound = (delta * (alpha - 1.0)).exp();
        prop_assert!(renyi_moment(p.weights(), q.weights(), alpha).unwrap() <= bound * (1.0 + 1e-9));
        let lattice = renyi_lattice_min(&u, &q, alpha, delta, 1000);
        // The lattice is a subset of the ball, so it can only be worse, and
        // by at most a few lattice steps times the utility range.
        prop_assert!(sol.value <= lattice + 1e-9, "solver {} above lattice {}", sol.value, lattice);
        prop_assert!(lattice - sol.value <= 5e-3, "solver {} lattice {}", sol.value, lattice);
    }
}

#[test]
fn renyi_worst_case_has_the_stationary_form() {
    // p ∝ q·(μ − u)₊^{1/(α−1)}: the density ratio is a decreasing function of u.
    let q = DiscretePmf::new(vec![0.1, 0.2, 0.3, 0.25, 0.15]).unwrap();
    let u = [0.9, 0.1, 0.5, 0.3, 0.7];
    let sol = solve_inner_renyi(&u, &q, 2.0, 0.2).unwrap();
    let p = sol.measure.as_pmf().unwrap();
    let ratio: Vec<f64> = p.weights().iter().zip(q.weights()).map(|(a, b)| a / b).collect();
    let mut order: Vec<usize> = (0..5).collect();
    order.sort_by(|&a, &b| u[a].total_cmp(&u[b]));
    for w in order.windows(2) {
        assert!(ratio[w[0]] >= ratio[w[1]] - 1e-12);
    }
    // α = 2: the ratio is affine in u on the support.
    let (a, b) = (order[0], order[1]);
    let slope = (ratio[a] - ratio[b]) / (u[a] - u[b]);
    for &k in &order[2..] {
        if ratio[k] > 0.0 {
            assert!((ratio[k] - (ratio[a] + slope * (u[k] - u[a]))).abs() < 1e-9);
        }
    }
}

#[test]
fn wasserstein_zero_radius_is_the_reference() {
    let grid = LossGrid::new(vec![0.0, 1.0, 2.0, 3.0], 3.0).unwrap();
    let fq = cdf_on(&grid, vec![0.1, 0.4, 0.8, 1.0]);
    let sol = solve_inner_wasserstein(&[3.0, 2.0, 1.0, 0.0], &fq, 0.0).unwrap();
    assert_eq!(sol.measure, Measure::Cdf(fq));
}
