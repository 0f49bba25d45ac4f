//! Outer maximin over a finite prior set:
//!
//! `max t  s.t.  t ≤ Σ ωₖᵢ u(W₀ − xᵢ + yᵢ − Π₀)` for every prior `k`,
//! insurer participation, and `y` in the feasibility class.
//!
//! Class constraints are boxes after a change of variables. For class I the
//! variables are the `yᵢ` themselves with `0 ≤ yᵢ ≤ xᵢ`. For the no-sabotage
//! class they are the starting value `y₁ ∈ [0, x₁]` and the increments
//! `dᵢ ∈ [0, xᵢ₊₁ − xᵢ]`, with `y` the running sum. Points with `xᵢ = 0` (and
//! `y₁` when `x₁ = 0`) are fixed at zero and dropped. Each prior constraint
//! and the participation constraint is smooth and concave, so the epigraph
//! problem is solved with a log barrier and damped Newton steps. The final
//! barrier weight is set by the requested duality gap. Multipliers come from
//! the central path: prior weights `1/(τ sₖ)` sum to one and form the mixture
//! that certifies the value.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{dot, FeasibilityClass, IndemnitySchedule, LossGrid, Measure, UtilitySpec, WealthConfig};

/// Tuning for the barrier method.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct OuterOptions {
    /// Barrier weight growth per stage.
    pub barrier_factor: f64,
    /// Stop once the gap bound `ν/τ` falls below this, relative to `max(1, |t|)`.
    pub gap_tol: f64,
    pub max_stages: usize,
    pub max_newton: usize,
}

impl Default for OuterOptions {
    fn default() -> Self {
        OuterOptions {
            barrier_factor: 10.0,
            gap_tol: 1e-9,
            max_stages: 40,
            max_newton: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OuterSolution {
    pub indemnity: IndemnitySchedule,
    /// `min_k` expected utility of the indemnity over the priors.
    pub value: f64,
    /// Epigraph variable at termination (`≤ value`).
    pub epigraph: f64,
    /// Central-path multipliers of the prior constraints (sum to one).
    pub prior_weights: Vec<f64>,
    /// Priors whose multiplier exceeds `1e−6`.
    pub active_priors: Vec<usize>,
    /// Multiplier of the participation constraint.
    pub participation_multiplier: f64,
    pub participation_slack: f64,
    /// Sup-norm of the stationarity residual, scaled by the barrier weight.
    pub kkt_residual: f64,
    /// Duality gap bound `ν/τ`, with `ν` the total barrier weight.
    pub duality_gap: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Change of variables between the box variables `z` and the schedule `y`.
///
/// Knots that carry no weight under any prior or the reference do not affect
/// the problem. Their indemnity is pinned to full coverage (`yᵢ = xᵢ` for
/// class I; unit slope over the trailing null stretch for the no-sabotage
/// class) and dropped from the variables.
#[derive(Debug, Clone)]
struct Param {
    class: FeasibilityClass,
    n: usize,
    /// Class I: grid index of each variable.
    index: Vec<usize>,
    /// No-sabotage: whether `y₁` is a variable.
    has_first: bool,
    /// No-sabotage: increments `0..free_incr` are variables, the rest are
    /// pinned to the cell width.
    free_incr: usize,
    /// `y` at `z = 0`.
    base: Vec<f64>,
    upper: Vec<f64>,
    /// Weight of each variable's box barrier: the largest probability mass
    /// the variable moves, relative to the largest such mass. Without it,
    /// variables that only touch the far tail sit far inside their boxes
    /// long after the value has converged.
    bw: Vec<f64>,
}

impl Param {
    fn new(grid: &LossGrid, class: FeasibilityClass, null: &[bool]) -> Self {
        let x = grid.points();
        let n = x.len();
        match class {
            FeasibilityClass::Basic => {
                let index: Vec<usize> = (0..n).filter(|&i| x[i] > 0.0 && !null[i]).collect();
                let upper = index.iter().map(|&i| x[i]).collect();
                let base = (0..n).map(|i| if null[i] { x[i] } else { 0.0 }).collect();
                Param {
                    class,
                    n,
                    index,
                    has_first: false,
                    free_incr: 0,
                    base,
                    upper,
                    bw: vec![],
                }
            }
            FeasibilityClass::NoSabotage => {
                // Increment j moves y at knots j+1.. only.
                let last = (0..n).rev().find(|&i| !null[i]).unwrap_or(0);
                let has_first = x[0] > 0.0;
                let widths = grid.widths();
                let mut upper = Vec::with_capacity(n);
                if has_first {
                    upper.push(x[0]);
                }
                upper.extend_from_slice(&widths[..last]);
                let mut base = vec![0.0; n];
                for i in last + 1..n {
                    base[i] = base[i - 1] + widths[i - 1];
                }
                Param {
                    class,
                    n,
                    index: vec![],
                    has_first,
                    free_incr: last,
                    base,
                    upper,
                    bw: vec![],
                }
            }
        }
    }

    /// Sets the barrier weights from the per-knot mass `mass`.
    fn set_barrier_weights(&mut self, mass: &[f64]) {
        let mut bw: Vec<f64> = match self.class {
            FeasibilityClass::Basic => self.index.iter().map(|&i| mass[i]).collect(),
            FeasibilityClass::NoSabotage => {
                let mut suffix = vec![0.0; self.n + 1];
                for i in (0..self.n).rev() {
                    suffix[i] = suffix[i + 1] + mass[i];
                }
                let mut out = Vec::with_capacity(self.dim());
                if self.has_first {
                    out.push(suffix[0]);
                }
                out.extend((0..self.free_incr).map(|j| suffix[j + 1]));
                out
            }
        };
        let top = bw.iter().cloned().fold(0.0, f64::max);
        for w in &mut bw {
            *w = if top > 0.0 { (*w / top).max(1e-12) } else { 1.0 };
        }
        self.bw = bw;
    }

    fn dim(&self) -> usize {
        self.upper.len()
    }

    fn to_y(&self, z: &[f64]) -> Vec<f64> {
        let mut y = self.base.clone();
        match self.class {
            FeasibilityClass::Basic => {
                for (k, &i) in self.index.iter().enumerate() {
                    y[i] = z[k];
                }
            }
            FeasibilityClass::NoSabotage => {
                let off = self.has_first as usize;
                let first = if self.has_first { z[0] } else { 0.0 };
                let mut acc = first;
                for i in 0..self.n {
                    if i > 0 && i - 1 < self.free_incr {
                        acc += z[off + i - 1];
                    }
                    y[i] += acc;
                }
            }
        }
        y
    }

    /// `Tᵀ g` for a gradient `g` in y-space.
    fn pull_back(&self, g: &[f64]) -> Vec<f64> {
        match self.class {
            FeasibilityClass::Basic => self.index.iter().map(|&i| g[i]).collect(),
            FeasibilityClass::NoSabotage => {
                let mut out = Vec::with_capacity(self.dim());
                // suffix[i] = Σ_{l ≥ i} g_l
                let mut suffix = vec![0.0; self.n + 1];
                for i in (0..self.n).rev() {
                    suffix[i] = suffix[i + 1] + g[i];
                }
                if self.has_first {
                    out.push(suffix[0]);
                }
                for j in 0..self.free_incr {
                    out.push(suffix[j + 1]);
                }
                out
            }
        }
    }

    /// Adds `Tᵀ diag(d) T` to `h` (top-left block).
    fn add_diag(&self, d: &[f64], h: &mut DMatrix<f64>) {
        match self.class {
            FeasibilityClass::Basic => {
                for (k, &i) in self.index.iter().enumerate() {
                    h[(k, k)] += d[i];
                }
            }
            FeasibilityClass::NoSabotage => {
                let mut suffix = vec![0.0; self.n + 1];
                for i in (0..self.n).rev() {
                    suffix[i] = suffix[i + 1] + d[i];
                }
                let off = self.has_first as usize;
                let m = self.free_incr;
                if self.has_first {
                    h[(0, 0)] += suffix[0];
                    for j in 0..m {
                        h[(0, off + j)] += suffix[j + 1];
                        h[(off + j, 0)] += suffix[j + 1];
                    }
                }
                for a in 0..m {
                    for b in 0..m {
                        h[(off + a, off + b)] += suffix[a.max(b) + 1];
                    }
                }
            }
        }
    }
}

struct Problem<'a> {
    x: &'a [f64],
    cfg: &'a WealthConfig,
    u: &'a UtilitySpec,
    v: &'a UtilitySpec,
    priors: Vec<Vec<f64>>,
    qw: Vec<f64>,
    param: Param,
}

struct Eval {
    y: Vec<f64>,
    fk: Vec<f64>,
    part: f64,
}

impl Problem<'_> {
    fn eval(&self, z: &[f64]) -> Option<Eval> {
        let y = self.param.to_y(z);
        let mut util = vec![0.0; y.len()];
        for i in 0..y.len() {
            let w = self.cfg.buyer_wealth(self.x[i], y[i]);
            if let Some(lo) = self.u.domain_lower() {
                if !(w > lo) {
                    return None;
                }
            }
            util[i] = self.u.value_unchecked(w);
        }
        let fk = self.priors.iter().map(|p| dot(p, &util)).collect();
        // Summed as utility differences: near the participation boundary the
        // slack is many orders of magnitude below the utility level.
        let mut part = 0.0;
        for i in 0..y.len() {
            if self.qw[i] != 0.0 {
                let w = self.cfg.insurer_wealth(y[i]);
                if let Some(lo) = self.v.domain_lower() {
                    if !(w > lo) {
                        return None;
                    }
                }
                part += self.qw[i] * self.v.diff_unchecked(w, self.cfg.w0_ins);
            }
        }
        Some(Eval { y, fk, part })
    }

    /// Slacks of every barrier term, or `None` outside the barrier domain.
    fn slacks(&self, z: &[f64], t: f64) -> Option<Slacks> {
        for (zj, uj) in z.iter().zip(&self.param.upper) {
            if !(*zj > 0.0 && *zj < *uj) {
                return None;
            }
        }
        let e = self.eval(z)?;
        if !(e.part > 0.0) {
            return None;
        }
        let prior: Vec<f64> = e.fk.iter().map(|f| f - t).collect();
        if prior.iter().any(|s| !(*s > 0.0)) {
            return None;
        }
        Some(Slacks {
            prior,
            part: e.part,
            z: z.to_vec(),
            t,
        })
    }
}

struct Slacks {
    prior: Vec<f64>,
    part: f64,
    z: Vec<f64>,
    t: f64,
}

impl Slacks {
    /// Barrier value at `self` minus the value at `base`, summed as log ratios
    /// so that the change stays accurate when the value itself is large.
    fn change_from(&self, base: &Slacks, tau: f64, upper: &[f64], bw: &[f64]) -> f64 {
        let mut d = -tau * (self.t - base.t) - (self.part / base.part).ln();
        for (a, b) in self.prior.iter().zip(&base.prior) {
            d -= (a / b).ln();
        }
        for (((a, b), u), w) in self.z.iter().zip(&base.z).zip(upper).zip(bw) {
            d -= w * ((a / b).ln() + ((u - a) / (u - b)).ln());
        }
        d
    }
}

/// Maximizes the worst expected utility over `priors` subject to the
/// participation constraint under `reference` and the class constraints.
#[allow(clippy::too_many_arguments)]
pub fn solve_outer(
    priors: &[Measure],
    reference: &Measure,
    grid: &LossGrid,
    cfg: &WealthConfig,
    u: &UtilitySpec,
    v: &UtilitySpec,
    class: FeasibilityClass,
    opts: &OuterOptions,
) -> Result<OuterSolution> {
    if priors.is_empty() {
        return Err(Error::invalid("outer problem needs at least one prior"));
    }
    let n = grid.len();
    if priors.iter().any(|p| p.len() != n) || reference.len() != n {
        return Err(Error::dim("priors must live on the loss grid"));
    }
    let x = grid.points();
    let prior_w: Vec<Vec<f64>> = priors.iter().map(|p| p.node_weights()).collect();
    let qw = reference.node_weights();
    let null: Vec<bool> = (0..n)
        .map(|i| qw[i] == 0.0 && prior_w.iter().all(|w| w[i] == 0.0))
        .collect();
    v.value(cfg.w0_ins)?;
    let mut param = Param::new(grid, class, &null);
    let mass: Vec<f64> = (0..n)
        .map(|i| prior_w.iter().fold(qw[i], |acc, w| acc.max(w[i])))
        .collect();
    param.set_barrier_weights(&mass);
    let prob = Problem {
        x,
        cfg,
        u,
        v,
        priors: prior_w,
        qw,
        param,
    };
    let m = priors.len();
    let dim = prob.param.dim();

    // Everything fixed (e.g. a single zero-loss point): nothing to optimize.
    if dim == 0 {
        let e = prob
            .eval(&[])
            .ok_or_else(|| Error::invalid("utility domain violated at the only schedule"))?;
        let value = e.fk.iter().cloned().fold(f64::INFINITY, f64::min);
        let mut w = vec![0.0; m];
        let arg = e.fk.iter().position(|&f| f == value).unwrap_or(0);
        w[arg] = 1.0;
        return Ok(OuterSolution {
            indemnity: IndemnitySchedule::from_values(e.y, class),
            value,
            epigraph: value,
            prior_weights: w,
            active_priors: vec![arg],
            participation_multiplier: 0.0,
            participation_slack: e.part,
            kkt_residual: 0.0,
            duality_gap: 0.0,
            iterations: 0,
            converged: true,
        });
    }

    let zero_slack = prob
        .eval(&vec![0.0; dim])
        .map(|e| e.part)
        .ok_or_else(|| Error::invalid("utility domain violated at zero indemnity"))?;
    if !(zero_slack > 0.0) {
        return Err(Error::invalid(
            "participation fails even without indemnity; premium must be positive",
        ));
    }

    // Start at the box midpoint, shrunk toward zero until participation holds
    // strictly.
    let mut theta = 0.5;
    let mut z: Vec<f64>;
    loop {
        z = prob.param.upper.iter().map(|u| theta * u).collect();
        match prob.eval(&z) {
            Some(e) if e.part > 0.0 => break,
            _ => theta *= 0.5,
        }
        if theta < 1e-12 {
            return Err(Error::Structural("no strictly feasible barrier start".into()));
        }
    }
    let e0 = prob.eval(&z).unwrap();
    let fmin = e0.fk.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut t = fmin - 1.0f64.max(1e-3 * fmin.abs());

    let constraints = (m + 1) as f64 + 2.0 * prob.param.bw.iter().sum::<f64>();
    let mut tau = constraints / (1.0 + fmin.abs());
    let mut iterations = 0;
    let mut trace = Vec::new();
    let mut stage = 0;
    let mut last_residual;
    loop {
        let (ok, residual) = center(&prob, &mut z, &mut t, tau, opts, &mut iterations)?;
        last_residual = residual;
        trace.push(t);
        if !ok {
            return Err(Error::NoConvergence {
                solver: "outer barrier",
                detail: format!("centering failed at barrier weight {tau:e}"),
                trace,
            });
        }
        let target = constraints / (opts.gap_tol * 1.0f64.max(t.abs()));
        if tau >= target * (1.0 - 1e-12) {
            break;
        }
        stage += 1;
        if stage >= opts.max_stages {
            return Err(Error::NoConvergence {
                solver: "outer barrier",
                detail: "stage cap reached".into(),
                trace,
            });
        }
        tau = (tau * opts.barrier_factor).min(target);
    }

    let e = prob.eval(&z).unwrap();
    let value = e.fk.iter().cloned().fold(f64::INFINITY, f64::min);
    let weights: Vec<f64> = e.fk.iter().map(|f| 1.0 / (tau * (f - t))).collect();
    let total: f64 = weights.iter().sum();
    let prior_weights: Vec<f64> = weights.iter().map(|w| w / total).collect();
    let active_priors = (0..m).filter(|&k| prior_weights[k] > 1e-6).collect();
    let mut y = e.y;
    // Clean rounding residue so the schedule passes exact feasibility checks.
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi = yi.clamp(0.0, xi);
    }
    Ok(OuterSolution {
        indemnity: IndemnitySchedule::from_values(y, class),
        value,
        epigraph: t,
        prior_weights,
        active_priors,
        participation_multiplier: 1.0 / (tau * e.part),
        participation_slack: e.part,
        kkt_residual: last_residual,
        duality_gap: constraints / tau,
        iterations,
        converged: true,
    })
}

/// Solves `H Δ = −g` after symmetric diagonal scaling, with a growing ridge
/// if rounding has cost the scaled matrix its positive definiteness.
fn newton_step(h: &DMatrix<f64>, grad: &DVector<f64>) -> Result<DVector<f64>> {
    let n = h.nrows();
    let d = DVector::from_iterator(n, (0..n).map(|i| 1.0 / h[(i, i)].max(f64::MIN_POSITIVE).sqrt()));
    let mut scaled = h.clone();
    for a in 0..n {
        for b in 0..n {
            scaled[(a, b)] *= d[a] * d[b];
        }
    }
    let rhs = -grad.component_mul(&d);
    let mut ridge = 0.0;
    loop {
        let mut m = scaled.clone();
        for i in 0..n {
            m[(i, i)] += ridge;
        }
        if let Some(c) = m.cholesky() {
            return Ok(c.solve(&rhs).component_mul(&d));
        }
        ridge = if ridge == 0.0 { 1e-14 } else { ridge * 100.0 };
        if ridge > 1.0 {
            return Err(Error::Structural(
                "outer Newton system is not positive definite".into(),
            ));
        }
    }
}

/// Damped Newton centering. Returns (centered, scaled residual).
fn center(
    prob: &Problem,
    z: &mut Vec<f64>,
    t: &mut f64,
    tau: f64,
    opts: &OuterOptions,
    iterations: &mut usize,
) -> Result<(bool, f64)> {
    let dim = z.len();
    let m = prob.priors.len();
    let x = prob.x;
    let cfg = prob.cfg;
    let mut current = prob
        .slacks(z, *t)
        .ok_or_else(|| Error::Structural("outer iterate left the barrier domain".into()))?;
    let mut residual = f64::INFINITY;
    for _ in 0..opts.max_newton {
        *iterations += 1;
        let e = prob.eval(z).unwrap();
        let n = e.y.len();
        let mut up = vec![0.0; n];
        let mut upp = vec![0.0; n];
        for i in 0..n {
            let w = cfg.buyer_wealth(x[i], e.y[i]);
            up[i] = prob.u.derivative_unchecked(w);
            upp[i] = prob.u.second_derivative_unchecked(w);
        }
        let mut h = DMatrix::<f64>::zeros(dim + 1, dim + 1);
        let mut grad = DVector::<f64>::zeros(dim + 1);
        let mut diag = vec![0.0; n];
        grad[dim] = -tau;
        for k in 0..m {
            let s = e.fk[k] - *t;
            let wk = &prob.priors[k];
            let gy: Vec<f64> = (0..n).map(|i| wk[i] * up[i]).collect();
            let gz = prob.param.pull_back(&gy);
            let inv = 1.0 / s;
            let inv2 = inv * inv;
            for a in 0..dim {
                grad[a] -= gz[a] * inv;
            }
            grad[dim] += inv;
            // â = (gz, -1); add â âᵀ / s².
            for a in 0..dim {
                let ga = gz[a] * inv2;
                for b in 0..=a {
                    h[(a, b)] += ga * gz[b];
                }
                h[(dim, a)] -= ga;
            }
            h[(dim, dim)] += inv2;
            for i in 0..n {
                diag[i] -= wk[i] * upp[i] * inv;
            }
        }
        // Participation.
        let g = e.part;
        let rho1 = 1.0 + cfg.loading;
        let mut gy = vec![0.0; n];
        for i in 0..n {
            if prob.qw[i] != 0.0 {
                let w = cfg.insurer_wealth(e.y[i]);
                gy[i] = -rho1 * prob.qw[i] * prob.v.derivative_unchecked(w);
                diag[i] -= rho1 * rho1 * prob.qw[i] * prob.v.second_derivative_unchecked(w) / g;
            }
        }
        let gz = prob.param.pull_back(&gy);
        let inv2 = 1.0 / (g * g);
        for a in 0..dim {
            grad[a] -= gz[a] / g;
            let ga = gz[a] * inv2;
            for b in 0..=a {
                h[(a, b)] += ga * gz[b];
            }
        }
        // Symmetrize the lower triangle built so far.
        for a in 0..dim + 1 {
            for b in 0..a {
                h[(b, a)] = h[(a, b)];
            }
        }
        prob.param.add_diag(&diag, &mut h);
        for a in 0..dim {
            let zj = z[a];
            let uj = prob.param.upper[a];
            let wj = prob.param.bw[a];
            grad[a] += wj * (-1.0 / zj + 1.0 / (uj - zj));
            h[(a, a)] += wj * (1.0 / (zj * zj) + 1.0 / ((uj - zj) * (uj - zj)));
        }
        residual = grad.amax() / tau;

        let step = newton_step(&h, &grad)?;
        let decrement = -grad.dot(&step);
        if decrement <= 1e-9 {
            return Ok((true, residual));
        }
        let mut alpha = 1.0;
        let mut accepted = false;
        let mut zt = vec![0.0; dim];
        let mut tt = *t;
        while alpha > 1e-16 {
            for a in 0..dim {
                zt[a] = z[a] + alpha * step[a];
            }
            tt = *t + alpha * step[dim];
            if let Some(trial) = prob.slacks(&zt, tt) {
                if trial.change_from(&current, tau, &prob.param.upper, &prob.param.bw) <= -0.25 * alpha * decrement {
                    current = trial;
                    accepted = true;
                    break;
                }
            }
            alpha *= 0.5;
        }
        if !accepted {
            return Ok((decrement <= 1e-3, residual));
        }
        std::mem::swap(z, &mut zt);
        *t = tt;
        // A damped step at this size means rounding, not curvature, limits
        // further progress.
        if decrement <= 1e-9 || (alpha < 1.0 && decrement <= 1e-3) {
            return Ok((true, residual));
        }
    }
    Ok((false, residual))
}
