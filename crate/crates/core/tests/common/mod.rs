//! Shared generators for the integration tests.
#![allow(dead_code, clippy::needless_range_loop)]

use meu_insurance::model::{DiscretePmf, LossGrid, PiecewiseLinearCdf};
use proptest::prelude::*;

/// Increasing knots starting at 0 with gaps in `[0.1, 3]`.
pub fn grid_strategy(min: usize, max: usize) -> impl Strategy<Value = LossGrid> {
    prop::collection::vec(0.1f64..3.0, min - 1..max).prop_map(|gaps| {
        let mut x = vec![0.0];
        for g in gaps {
            x.push(x.last().unwrap() + g);
        }
        let upper = *x.last().unwrap();
        LossGrid::new(x, upper).unwrap()
    })
}

/// Cdf values on `n` knots: nondecreasing, ending at 1.
pub fn cdf_values(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..1.0, n).prop_map(|w| {
        let total: f64 = w.iter().sum::<f64>() + 1e-3;
        let mut acc = 0.0;
        let mut v: Vec<f64> = w.iter().map(|wi| {
            acc += wi / total;
            acc
        })
        .collect();
        *v.last_mut().unwrap() = 1.0;
        v
    })
}

pub fn cdf_on(grid: &LossGrid, values: Vec<f64>) -> PiecewiseLinearCdf {
    PiecewiseLinearCdf::new(grid, values).unwrap()
}

/// Strictly positive pmf with `n` atoms.
pub fn pmf_strategy(n: usize) -> impl Strategy<Value = DiscretePmf> {
    prop::collection::vec(0.01f64..1.0, n).prop_map(|w| DiscretePmf::normalized(w).unwrap())
}

/// Linear interpolation of cdf values at `t`.
pub fn eval_pwl(x: &[f64], f: &[f64], t: f64) -> f64 {
    if t <= x[0] {
        return f[0];
    }
    for i in 0..x.len() - 1 {
        if t <= x[i + 1] {
            let s = (t - x[i]) / (x[i + 1] - x[i]);
            return f[i] + s * (f[i + 1] - f[i]);
        }
    }
    1.0
}

/// Maximizes `c·y` subject to `A y ≤ b` by enumerating every vertex of the
/// polytope (all square subsystems of active constraints). Exponential, so
/// only for a handful of variables.
pub fn lp_vertex_max(c: &[f64], a: &[Vec<f64>], b: &[f64]) -> Option<(f64, Vec<f64>)> {
    let n = c.len();
    let m = a.len();
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut idx: Vec<usize> = (0..n).collect();
    loop {
        let mut mat: Vec<Vec<f64>> = idx.iter().map(|&i| a[i].clone()).collect();
        let mut rhs: Vec<f64> = idx.iter().map(|&i| b[i]).collect();
        if let Some(y) = gauss_solve(&mut mat, &mut rhs) {
            let feasible = (0..m).all(|i| {
                let lhs: f64 = a[i].iter().zip(&y).map(|(p, q)| p * q).sum();
                lhs <= b[i] + 1e-9
            });
            if feasible {
                let v: f64 = c.iter().zip(&y).map(|(p, q)| p * q).sum();
                if best.as_ref().is_none_or(|(bv, _)| v > *bv) {
                    best = Some((v, y));
                }
            }
        }
        // Next n-subset of 0..m in lexicographic order.
        let mut k = n;
        loop {
            if k == 0 {
                return best;
            }
            k -= 1;
            if idx[k] < m - n + k {
                idx[k] += 1;
                for j in k + 1..n {
                    idx[j] = idx[j - 1] + 1;
                }
                break;
            }
        }
    }
}

fn gauss_solve(a: &mut [Vec<f64>], b: &mut [f64]) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            for k in col..n {
                a[r][k] -= f * a[col][k];
            }
            b[r] -= f * b[col];
        }
    }
    let mut y = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|k| a[r][k] * y[k]).sum();
        y[r] = (b[r] - s) / a[r][r];
    }
    Some(y)
}

/// Constraint rows for `0 ≤ y ≤ x`, plus `0 ≤ yᵢ₊₁ − yᵢ ≤ xᵢ₊₁ − xᵢ` when
/// `no_sabotage`.
pub fn class_constraints(x: &[f64], no_sabotage: bool) -> (Vec<Vec<f64>>, Vec<f64>) {
    let n = x.len();
    let mut a = Vec::new();
    let mut b = Vec::new();
    for i in 0..n {
        let mut row = vec![0.0; n];
        row[i] = -1.0;
        a.push(row.clone());
        b.push(0.0);
        row[i] = 1.0;
        a.push(row);
        b.push(x[i]);
    }
    if no_sabotage {
        for i in 0..n - 1 {
            let mut row = vec![0.0; n];
            row[i] = -1.0;
            row[i + 1] = 1.0;
            a.push(row.clone());
            b.push(x[i + 1] - x[i]);
            a.push(row.iter().map(|v| -v).collect());
            b.push(0.0);
        }
    }
    (a, b)
}
