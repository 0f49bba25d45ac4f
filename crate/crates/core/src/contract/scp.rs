//! Successive convex programming for the saddle problem.
//!
//! Starting from `P⁽⁰⁾ = {Q̂}`, each round solves the outer maximin over the
//! current finite prior set, then the inner worst case at the resulting
//! indemnity, and appends that worst case. The outer values can only fall
//! as priors are added. The round's gap (outer value minus the new inner
//! value) bounds the distance to the saddle value.
//!
//! The worst-case measure reported at the end is the mixture of priors
//! weighted by the outer multipliers. That mixture lies in the ball by
//! convexity, and the final indemnity is optimal against it. A single
//! member of the prior set generally is not.

use super::outer::{solve_outer, OuterOptions, OuterSolution};
use crate::ambiguity::{solve_inner, InnerSolution};
use crate::error::{Error, Result};
use crate::metrics::AmbiguitySetSpec;
use crate::model::{FeasibilityClass, IndemnitySchedule, LossGrid, Measure, UtilitySpec, WealthConfig};

/// One saddle instance.
#[derive(Debug, Clone, PartialEq)]
pub struct SaddleProblem {
    pub grid: LossGrid,
    pub wealth: WealthConfig,
    /// Buyer utility.
    pub u: UtilitySpec,
    /// Insurer utility.
    pub v: UtilitySpec,
    /// Reference measure `Q̂`: center of the ball and the insurer's belief.
    pub reference: Measure,
    pub ambiguity: AmbiguitySetSpec,
    pub class: FeasibilityClass,
}

impl SaddleProblem {
    pub fn validate(&self) -> Result<()> {
        self.wealth.validate_for(&self.grid, &self.u, &self.v)?;
        self.u.validate()?;
        self.v.validate()?;
        self.ambiguity.validate()?;
        if self.reference.len() != self.grid.len() {
            return Err(Error::dim("reference measure is not on the loss grid"));
        }
        match (&self.ambiguity, &self.reference) {
            (AmbiguitySetSpec::Wasserstein { .. }, Measure::Cdf(_))
            | (AmbiguitySetSpec::Renyi { .. }, Measure::Pmf(_)) => Ok(()),
            _ => Err(Error::invalid(
                "Wasserstein balls need a cdf reference and Renyi balls a pmf reference",
            )),
        }
    }

    pub fn outer(&self, priors: &[Measure], opts: &OuterOptions) -> Result<OuterSolution> {
        solve_outer(
            priors,
            &self.reference,
            &self.grid,
            &self.wealth,
            &self.u,
            &self.v,
            self.class,
            opts,
        )
    }

    pub fn inner(&self, y: &[f64]) -> Result<InnerSolution> {
        solve_inner(y, &self.grid, &self.wealth, &self.u, &self.reference, &self.ambiguity)
    }

    pub fn with_radius(&self, delta: f64) -> Self {
        SaddleProblem {
            ambiguity: self.ambiguity.with_radius(delta),
            ..self.clone()
        }
    }

    pub fn with_class(&self, class: FeasibilityClass) -> Self {
        SaddleProblem {
            class,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct ScpOptions {
    /// Stop once the outer value exceeds the new inner value by less than this.
    pub stop_tol: f64,
    /// A new worst case this close to an existing prior ends the iteration.
    pub duplicate_tol: f64,
    pub max_rounds: usize,
    pub outer: OuterOptions,
}

impl Default for ScpOptions {
    fn default() -> Self {
        ScpOptions {
            stop_tol: 1e-6,
            duplicate_tol: 1e-8,
            max_rounds: 50,
            outer: OuterOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum StopReason {
    /// Outer and inner values agree within the stop tolerance.
    GapClosed,
    /// The new worst case was already in the prior set.
    NoNewModel,
}

/// One SCP round.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct TraceRow {
    pub iter: usize,
    pub outer_value: f64,
    pub inner_value: f64,
    pub gap: f64,
    /// Distance from the new worst case to the nearest existing prior.
    pub new_prior_distance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SaddleResult {
    pub problem: SaddleProblem,
    pub indemnity: IndemnitySchedule,
    /// Multiplier-weighted mixture of the prior set.
    pub worst_case: Measure,
    /// Final outer value.
    pub value: f64,
    /// Worst-case value of the final indemnity over the whole ball.
    pub inner_value: f64,
    pub trace: Vec<TraceRow>,
    pub priors: Vec<Measure>,
    pub prior_weights: Vec<f64>,
    pub participation_multiplier: f64,
    pub stop: StopReason,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
}

impl SaddleResult {
    /// Outer values `u⁰, u¹, …`.
    pub fn values(&self) -> Vec<f64> {
        self.trace.iter().map(|r| r.outer_value).collect()
    }

    /// Largest increase between consecutive outer values (≤ 0 when monotone).
    pub fn max_value_increase(&self) -> f64 {
        self.trace
            .windows(2)
            .map(|w| w[1].outer_value - w[0].outer_value)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

pub fn scp_solve(problem: &SaddleProblem, opts: &ScpOptions) -> Result<SaddleResult> {
    problem.validate()?;
    let mut priors = vec![problem.reference.clone()];
    let mut trace = Vec::new();
    let mut outer_iterations = 0;
    let mut inner_iterations = 0;
    let mut round = 0;
    loop {
        let outer = problem.outer(&priors, &opts.outer)?;
        outer_iterations += outer.iterations;
        let inner = problem.inner(outer.indemnity.values())?;
        inner_iterations += inner.iterations;
        let gap = outer.value - inner.value;
        let mut distance = f64::INFINITY;
        for p in &priors {
            distance = distance.min(problem.ambiguity.distance(&inner.measure, p)?);
        }
        trace.push(TraceRow {
            iter: round,
            outer_value: outer.value,
            inner_value: inner.value,
            gap,
            new_prior_distance: distance,
        });
        let stop = if gap <= opts.stop_tol {
            Some(StopReason::GapClosed)
        } else if distance <= opts.duplicate_tol {
            Some(StopReason::NoNewModel)
        } else {
            None
        };
        let finish = |stop| -> Result<SaddleResult> {
            Ok(SaddleResult {
                problem: problem.clone(),
                indemnity: outer.indemnity.clone(),
                worst_case: Measure::mixture(&priors, &outer.prior_weights)?,
                value: outer.value,
                inner_value: inner.value,
                trace: trace.clone(),
                priors: priors.clone(),
                prior_weights: outer.prior_weights.clone(),
                participation_multiplier: outer.participation_multiplier,
                stop,
                outer_iterations,
                inner_iterations,
            })
        };
        if let Some(stop) = stop {
            return finish(stop);
        }
        round += 1;
        if round >= opts.max_rounds {
            let best = finish(StopReason::GapClosed)?;
            return Err(Error::IterationCap {
                rounds: round,
                best: Box::new(best),
            });
        }
        priors.push(inner.measure);
    }
}

/// Outer value against the reported worst case minus the inner value at the
/// reported indemnity. Nonnegative up to solver accuracy, and zero at a
/// saddle point.
pub fn saddle_gap(result: &SaddleResult, opts: &OuterOptions) -> Result<f64> {
    let p = &result.problem;
    let inner = p.inner(result.indemnity.values())?;
    let outer = p.outer(std::slice::from_ref(&result.worst_case), opts)?;
    Ok(outer.value - inner.value)
}
