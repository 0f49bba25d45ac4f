//! Worst case over a Wasserstein ball of piecewise linear cdfs on the
//! reference knots.
//!
//! With node utilities `uⱼ` the trapezoid objective is linear in the cdf
//! values: `Σ ωⱼ(F) uⱼ = const + Σ cⱼ Fⱼ` with `cⱼ = ½(uⱼ₋₁ − uⱼ₊₁)` at
//! interior knots. The first and last cdf values stay pinned. Write
//! `F = F̂ + G`. The distance is `Σ Δxᵢ A(Gᵢ, Gᵢ₊₁)` where `A(a, b)` is the
//! mean of `|G|` over segment `i`. `A` is convex but kinks wherever `G`
//! vanishes, and such kinks are everywhere in a typical worst case.
//!
//! The kinks disappear after splitting `Gⱼ = Pⱼ − Nⱼ` with `P, N ≥ 0`. Let
//! `q(x, y) = (x² + y²)/(2(x + y))`. Then
//!
//! `A(Gₐ, G_b) ≤ q(Pₐ, N_b) + q(Nₐ, P_b)`,
//!
//! with equality at `P = G⁺, N = G⁻`. If both `G` values share a sign, the
//! right side is half the sum of absolute values. If the signs differ, it is
//! the exact area of the two triangles. Minimizing over splits therefore
//! recovers the exact ball. Each `q` term gets an epigraph variable `e` with
//! `x² + y² ≤ 2e(x + y)`, a rotated second-order cone whose log barrier is
//! self-concordant. The distance bound becomes linear in the `e`. The whole
//! problem is solved by a barrier method with Newton steps. Ordering
//! variables along the grid makes the Hessian banded (bandwidth 5) plus one
//! rank-one term from the distance bound, so each step is linear in the
//! grid size.

use super::InnerSolution;
use crate::error::{Error, Result};
use crate::linalg::BandedSpd;
use crate::metrics::wasserstein_values;
use crate::model::{cdf_node_weights, dot, Measure, PiecewiseLinearCdf};

const BARRIER_FACTOR: f64 = 10.0;
/// Target duality gap in units of the normalized objective.
const GAP_TOL: f64 = 1e-8;
const MAX_NEWTON: usize = 2000;
const BANDWIDTH: usize = 5;

pub fn solve_inner_wasserstein(
    util: &[f64],
    fq: &PiecewiseLinearCdf,
    delta: f64,
) -> Result<InnerSolution> {
    let n = fq.len();
    if util.len() != n {
        return Err(Error::dim("utility vector and reference cdf differ in length"));
    }
    if !(delta >= 0.0) {
        return Err(Error::invalid("Wasserstein radius must be nonnegative"));
    }
    let reference = || {
        let mut s = InnerSolution::reference(Measure::Cdf(fq.clone()), util);
        s.ball_slack = delta;
        s
    };
    if n <= 2 || delta == 0.0 {
        return Ok(reference());
    }
    let k = n - 2;
    let coef: Vec<f64> = (1..n - 1).map(|j| 0.5 * (util[j - 1] - util[j + 1])).collect();
    let scale = coef.iter().fold(0.0f64, |m, c| m.max(c.abs()));
    let umax = util.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale <= 1e-14 * (1.0 + umax) {
        return Ok(reference());
    }
    let coef: Vec<f64> = coef.iter().map(|c| c / scale).collect();

    let prob = Lifted {
        x: fq.knots(),
        fhat: fq.values(),
        coef: &coef,
        delta,
        k,
    };
    let mut v = prob.start();
    // Barrier parameter: split signs, monotonicity, two cones of degree two
    // per segment, and the distance bound.
    let constraints = (2 * k + (n - 1) + 4 * (n - 1) + 1) as f64;
    let target = constraints / GAP_TOL;
    let mut tau = 1.0;
    let mut iterations = 0;
    let mut trace = Vec::new();
    let mut hess = BandedSpd::zeros(prob.dim(), BANDWIDTH);
    loop {
        let centered = prob.center(&mut v, tau, &mut hess, &mut iterations)?;
        trace.push(prob.objective(&v));
        if !centered {
            return Err(Error::NoConvergence {
                solver: "wasserstein inner",
                detail: format!("centering failed at barrier weight {tau:e}"),
                trace,
            });
        }
        if tau >= target * (1.0 - 1e-12) {
            break;
        }
        tau = (tau * BARRIER_FACTOR).min(target);
    }

    let g = prob.differences(&v);
    let f: Vec<f64> = fq.values().iter().zip(&g).map(|(a, b)| a + b).collect();
    let dist = wasserstein_values(fq.knots(), &f, fq.values());
    let budget_slack = delta - prob.budget(&v);
    let measure = Measure::Cdf(PiecewiseLinearCdf::from_parts_unchecked(
        fq.knots().to_vec(),
        f.clone(),
    ));
    Ok(InnerSolution {
        value: dot(&cdf_node_weights(&f), util),
        measure,
        ball_slack: delta - dist,
        lambda: scale / (tau * budget_slack),
        mu: 0.0,
        iterations,
        converged: true,
    })
}

/// Lifted barrier problem on `K` interior knots and `K + 1` segments.
///
/// Layout, grouped along the grid: `[e⁺₀, e⁻₀, P₁, N₁, e⁺₁, e⁻₁, …, P_K, N_K,
/// e⁺_K, e⁻_K]`. Segment `i` joins knots `i` and `i + 1`; `e⁺ᵢ` bounds
/// `q(Pᵢ, Nᵢ₊₁)` and `e⁻ᵢ` bounds `q(Nᵢ, Pᵢ₊₁)`. Knots `0` and `K + 1` carry
/// `P = N = 0`.
struct Lifted<'a> {
    x: &'a [f64],
    fhat: &'a [f64],
    coef: &'a [f64],
    delta: f64,
    k: usize,
}

/// One rotated cone `x² + y² ≤ 2e(x + y)` with variable indices.
struct Cone {
    x: Option<usize>,
    y: Option<usize>,
    e: usize,
}

struct Slacks {
    objective: f64,
    budget: f64,
    cones: Vec<f64>,
    mono: Vec<f64>,
    split: Vec<f64>,
}

impl Slacks {
    /// Barrier value here minus the value at `base`, as a sum of log ratios
    /// so that the change stays accurate when the value itself is large.
    fn change_from(&self, base: &Slacks, tau: f64) -> f64 {
        let mut d = tau * (self.objective - base.objective) - (self.budget / base.budget).ln();
        for (a, b) in self
            .cones
            .iter()
            .zip(&base.cones)
            .chain(self.mono.iter().zip(&base.mono))
            .chain(self.split.iter().zip(&base.split))
        {
            d -= (a / b).ln();
        }
        d
    }
}

fn q(x: f64, y: f64) -> f64 {
    let s = x + y;
    if s > 0.0 {
        0.5 * (x * x + y * y) / s
    } else {
        0.0
    }
}

impl Lifted<'_> {
    fn dim(&self) -> usize {
        4 * self.k + 2
    }

    #[inline]
    fn p_index(&self, j: usize) -> Option<usize> {
        (j >= 1 && j <= self.k).then(|| 4 * j - 2)
    }

    #[inline]
    fn n_index(&self, j: usize) -> Option<usize> {
        self.p_index(j).map(|i| i + 1)
    }

    #[inline]
    fn get(v: &[f64], i: Option<usize>) -> f64 {
        i.map_or(0.0, |i| v[i])
    }

    fn cones(&self) -> impl Iterator<Item = Cone> + '_ {
        (0..=self.k).flat_map(move |i| {
            [
                Cone {
                    x: self.p_index(i),
                    y: self.n_index(i + 1),
                    e: 4 * i,
                },
                Cone {
                    x: self.n_index(i),
                    y: self.p_index(i + 1),
                    e: 4 * i + 1,
                },
            ]
        })
    }

    fn differences(&self, v: &[f64]) -> Vec<f64> {
        (0..self.k + 2)
            .map(|j| Self::get(v, self.p_index(j)) - Self::get(v, self.n_index(j)))
            .collect()
    }

    fn budget(&self, v: &[f64]) -> f64 {
        (0..=self.k)
            .map(|i| (self.x[i + 1] - self.x[i]) * (v[4 * i] + v[4 * i + 1]))
            .sum()
    }

    fn objective(&self, v: &[f64]) -> f64 {
        (1..=self.k)
            .map(|j| self.coef[j - 1] * (v[4 * j - 2] - v[4 * j - 1]))
            .sum()
    }

    fn slacks(&self, v: &[f64]) -> Option<Slacks> {
        let split: Vec<f64> = (1..=self.k)
            .flat_map(|j| [v[4 * j - 2], v[4 * j - 1]])
            .collect();
        if split.iter().any(|t| !(*t > 0.0)) {
            return None;
        }
        let budget = self.delta - self.budget(v);
        if !(budget > 0.0) {
            return None;
        }
        let mut cones = Vec::with_capacity(2 * self.k + 2);
        for c in self.cones() {
            let (x, y, e) = (Self::get(v, c.x), Self::get(v, c.y), v[c.e]);
            let s = 2.0 * e * (x + y) - x * x - y * y;
            if !(s > 0.0) || !(e > 0.0) {
                return None;
            }
            cones.push(s);
        }
        let g = self.differences(v);
        let mono: Vec<f64> = (0..=self.k)
            .map(|i| (self.fhat[i + 1] - self.fhat[i]) + g[i + 1] - g[i])
            .collect();
        if mono.iter().any(|m| !(*m > 0.0)) {
            return None;
        }
        Some(Slacks {
            objective: self.objective(v),
            budget,
            cones,
            mono,
            split,
        })
    }

    /// Strictly feasible start: a step toward the uniform cdf (strictly
    /// increasing, so every monotonicity slack is positive), a symmetric split
    /// margin, and epigraph values halfway between their cones and the
    /// remaining distance budget.
    fn start(&self) -> Vec<f64> {
        let n = self.k + 2;
        let (a, b) = (self.x[0], self.x[n - 1]);
        let len = b - a;
        let f0 = self.fhat[0];
        let dir: Vec<f64> = (0..n)
            .map(|j| {
                let u = if j == n - 1 {
                    1.0
                } else {
                    f0 + (1.0 - f0) * (self.x[j] - a) / len
                };
                u - self.fhat[j]
            })
            .collect();
        let dist = wasserstein_values(self.x, &dir, &vec![0.0; n]);
        let mut theta = if dist > 0.0 {
            (0.25 * self.delta / dist).min(0.5)
        } else {
            0.5
        };
        let mut eps = self.delta / (8.0 * len);
        loop {
            let mut v = vec![0.0; self.dim()];
            for j in 1..=self.k {
                let g = theta * dir[j];
                v[4 * j - 2] = g.max(0.0) + eps;
                v[4 * j - 1] = (-g).max(0.0) + eps;
            }
            let mut used = 0.0;
            for c in self.cones().collect::<Vec<_>>() {
                let val = q(Self::get(&v, c.x), Self::get(&v, c.y));
                v[c.e] = val;
                used += (self.x[c.e / 4 + 1] - self.x[c.e / 4]) * val;
            }
            if used < self.delta {
                // Spread half of the leftover budget evenly over all cones.
                let lift = 0.5 * (self.delta - used) / (2.0 * len);
                for c in self.cones().collect::<Vec<_>>() {
                    v[c.e] += lift;
                }
                return v;
            }
            theta *= 0.5;
            eps *= 0.5;
        }
    }

    /// Newton centering at barrier weight `tau`. Returns false when progress
    /// stops with a large decrement.
    fn center(
        &self,
        v: &mut Vec<f64>,
        tau: f64,
        hess: &mut BandedSpd,
        iterations: &mut usize,
    ) -> Result<bool> {
        let dim = v.len();
        let mut grad = vec![0.0; dim];
        // Gradient of the budget used, `Σ Δxᵢ (e⁺ᵢ + e⁻ᵢ)`.
        let mut abud = vec![0.0; dim];
        for i in 0..=self.k {
            let w = self.x[i + 1] - self.x[i];
            abud[4 * i] = w;
            abud[4 * i + 1] = w;
        }
        let cones: Vec<Cone> = self.cones().collect();
        let mut current = self.slacks(v).ok_or_else(|| {
            Error::Structural("barrier start is not strictly feasible".into())
        })?;
        for _ in 0..MAX_NEWTON {
            *iterations += 1;
            hess.clear();
            grad.iter_mut().for_each(|g| *g = 0.0);

            for j in 1..=self.k {
                grad[4 * j - 2] += tau * self.coef[j - 1];
                grad[4 * j - 1] -= tau * self.coef[j - 1];
            }
            let budget = current.budget;
            for t in 0..dim {
                grad[t] += abud[t] / budget;
            }
            // Cones: -log s with s = 2e(x + y) - x² - y².
            for (c, &s) in cones.iter().zip(&current.cones) {
                let (x, y, e) = (Self::get(v, c.x), Self::get(v, c.y), v[c.e]);
                let mut idx = [0usize; 3];
                let mut ds = [0.0f64; 3];
                let mut cnt = 0;
                if let Some(i) = c.x {
                    idx[cnt] = i;
                    ds[cnt] = 2.0 * (e - x);
                    cnt += 1;
                }
                if let Some(i) = c.y {
                    idx[cnt] = i;
                    ds[cnt] = 2.0 * (e - y);
                    cnt += 1;
                }
                idx[cnt] = c.e;
                ds[cnt] = 2.0 * (x + y);
                cnt += 1;
                let inv = 1.0 / s;
                let inv2 = inv * inv;
                for r in 0..cnt {
                    grad[idx[r]] -= ds[r] * inv;
                    for cc in 0..=r {
                        hess.add(idx[r], idx[cc], ds[r] * ds[cc] * inv2);
                    }
                }
                // -∇²s / s: ∂²s/∂x² = ∂²s/∂y² = -2, ∂²s/∂x∂e = ∂²s/∂y∂e = 2.
                for r in 0..cnt - 1 {
                    hess.add(idx[r], idx[r], 2.0 * inv);
                    hess.add(idx[r], c.e, -2.0 * inv);
                }
            }
            // Monotonicity: m_i = ΔF̂ᵢ + Gᵢ₊₁ − Gᵢ.
            for (i, &mi) in current.mono.iter().enumerate() {
                let mut entries: [(usize, f64); 4] = [(0, 0.0); 4];
                let mut cnt = 0;
                if let Some(a) = self.p_index(i) {
                    entries[cnt] = (a, -1.0);
                    entries[cnt + 1] = (a + 1, 1.0);
                    cnt += 2;
                }
                if let Some(b) = self.p_index(i + 1) {
                    entries[cnt] = (b, 1.0);
                    entries[cnt + 1] = (b + 1, -1.0);
                    cnt += 2;
                }
                let inv = 1.0 / mi;
                let inv2 = inv * inv;
                for r in 0..cnt {
                    let (ir, dr) = entries[r];
                    grad[ir] -= dr * inv;
                    for c in 0..=r {
                        let (ic, dc) = entries[c];
                        hess.add(ir, ic, dr * dc * inv2);
                    }
                }
            }
            for j in 1..=self.k {
                for t in [4 * j - 2, 4 * j - 1] {
                    grad[t] -= 1.0 / v[t];
                    hess.add(t, t, 1.0 / (v[t] * v[t]));
                }
            }

            if !hess.factor() {
                return Err(Error::Structural(
                    "barrier Hessian lost positive definiteness".into(),
                ));
            }
            // Sherman-Morrison for the rank-one budget term a aᵀ / b².
            let neg: Vec<f64> = grad.iter().map(|g| -g).collect();
            let xs = hess.solve(&neg);
            let zs = hess.solve(&abud);
            let ax = dot(&abud, &xs);
            let az = dot(&abud, &zs);
            let sm = ax / (budget * budget + az);
            let step: Vec<f64> = xs.iter().zip(&zs).map(|(a, b)| a - sm * b).collect();
            let decrement = -dot(&grad, &step);
            if decrement <= 1e-9 {
                return Ok(true);
            }
            let mut alpha = 1.0;
            let mut trial = vec![0.0; dim];
            let mut accepted = false;
            while alpha > 1e-16 {
                for t in 0..dim {
                    trial[t] = v[t] + alpha * step[t];
                }
                if let Some(next) = self.slacks(&trial) {
                    if next.change_from(&current, tau) <= -0.25 * alpha * decrement {
                        current = next;
                        accepted = true;
                        break;
                    }
                }
                alpha *= 0.5;
            }
            if !accepted {
                // Rounding floor: the step can no longer be resolved.
                return Ok(decrement <= 1e-3);
            }
            std::mem::swap(v, &mut trial);
            if decrement <= 1e-9 || (alpha < 1.0 && decrement <= 1e-3) {
                return Ok(true);
            }
        }
        Ok(false)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::wasserstein_pwl;
    use crate::model::LossGrid;

    fn reference() -> (LossGrid, PiecewiseLinearCdf) {
        let grid = LossGrid::new(vec![0.0, 1.0, 2.0, 3.0], 3.0).unwrap();
        let f = PiecewiseLinearCdf::new(&grid, vec![0.0, 0.5, 0.8, 1.0]).unwrap();
        (grid, f)
    }

    #[test]
    fn zero_radius_and_constant_utility_return_reference() {
        let (_, f) = reference();
        let s = solve_inner_wasserstein(&[3.0, 2.0, 1.0, 0.0], &f, 0.0).unwrap();
        assert_eq!(s.measure, Measure::Cdf(f.clone()));
        let s = solve_inner_wasserstein(&[1.0; 4], &f, 0.3).unwrap();
        assert_eq!(s.measure, Measure::Cdf(f));
    }

    #[test]
    fn decreasing_utility_moves_mass_right() {
        let (_, f) = reference();
        let s = solve_inner_wasserstein(&[3.0, 2.0, 1.0, 0.0], &f, 0.2).unwrap();
        let p = s.measure.as_cdf().unwrap();
        assert!(wasserstein_pwl(p, &f).unwrap() <= 0.2 + 1e-9);
        for (a, b) in p.values().iter().zip(f.values()) {
            assert!(*a <= b + 1e-9);
        }
        // Linear utility: the value drops by exactly the transported distance.
        let base = dot(&cdf_node_weights(f.values()), &[3.0, 2.0, 1.0, 0.0]);
        assert!((base - s.value - 0.2).abs() < 1e-8, "{} {}", base, s.value);
    }

    #[test]
    fn cone_bound_is_exact_at_the_canonical_split() {
        for (a, b) in [(0.3, 0.7), (-0.4, 0.2), (0.5, -0.5), (-0.1, -0.6), (0.0, 0.4)] {
            let (pa, na) = (f64::max(a, 0.0), f64::max(-a, 0.0));
            let (pb, nb) = (f64::max(b, 0.0), f64::max(-b, 0.0));
            let lifted = q(pa, nb) + q(na, pb);
            // Mean of |G| over the unit segment.
            let exact = 0.5 * crate::metrics::phi(a, b);
            assert!((lifted - exact).abs() < 1e-15, "{a} {b}: {lifted} {exact}");
        }
    }
}
