use crate::error::{Error, Result};

/// Refinement stops with an error beyond this many segments.
pub const MAX_SEGMENTS: usize = 1 << 16;
/// Interior sample points per segment when measuring the error.
const SAMPLES_PER_SEGMENT: usize = 16;
/// Accept a partition once the sampled error is below this share of `Δ`.
/// For a `C²` function the error between samples exceeds the sampled
/// maximum by well under 1%.
const ACCEPT_FRACTION: f64 = 0.95;

/// Piecewise linear under- and over-estimators `g − Δ ≤ f ≤ g + Δ` of a
/// function, built from one interpolant `g` so both share breakpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct PwlEstimatorPair {
    breakpoints: Vec<f64>,
    /// Interpolant values at the breakpoints.
    values: Vec<f64>,
    delta: f64,
}

/// One linear piece `a·x + b` (under) and `a·x + c` (over) on `[xmin, xmax]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorSegment {
    pub xmin: f64,
    pub xmax: f64,
    pub slope: f64,
    pub under_intercept: f64,
    pub over_intercept: f64,
}

impl EstimatorSegment {
    pub fn under(&self, x: f64) -> f64 {
        self.slope * x + self.under_intercept
    }

    pub fn over(&self, x: f64) -> f64 {
        self.slope * x + self.over_intercept
    }
}

impl PwlEstimatorPair {
    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn segment_count(&self) -> usize {
        self.breakpoints.len() - 1
    }

    pub fn segments(&self) -> Vec<EstimatorSegment> {
        (0..self.segment_count())
            .map(|i| {
                let (x0, x1) = (self.breakpoints[i], self.breakpoints[i + 1]);
                let slope = (self.values[i + 1] - self.values[i]) / (x1 - x0);
                let b = self.values[i] - slope * x0;
                EstimatorSegment {
                    xmin: x0,
                    xmax: x1,
                    slope,
                    under_intercept: b - self.delta,
                    over_intercept: b + self.delta,
                }
            })
            .collect()
    }

    fn interpolant(&self, x: f64) -> f64 {
        let k = &self.breakpoints;
        let x = x.clamp(k[0], k[k.len() - 1]);
        let i = (k.partition_point(|&t| t <= x).max(1) - 1).min(k.len() - 2);
        let s = (x - k[i]) / (k[i + 1] - k[i]);
        self.values[i] + s * (self.values[i + 1] - self.values[i])
    }

    pub fn under(&self, x: f64) -> f64 {
        self.interpolant(x) - self.delta
    }

    pub fn over(&self, x: f64) -> f64 {
        self.interpolant(x) + self.delta
    }

    /// Segments on which both estimators pass through level `λ`:
    /// `λ` lies between `ψ−(xmin)` and `ψ−(xmax)` and between `ψ+(xmin)` and
    /// `ψ+(xmax)`. On such a segment the approximated function crosses `λ`.
    pub fn crossing_segments(&self, lambda: f64) -> Vec<usize> {
        let between = |a: f64, b: f64| a.min(b) <= lambda && lambda <= a.max(b);
        self.segments()
            .iter()
            .enumerate()
            .filter(|(_, s)| {
                between(s.under(s.xmin), s.under(s.xmax)) && between(s.over(s.xmin), s.over(s.xmax))
            })
            .map(|(i, _)| i)
            .collect()
    }
}

/// Interpolates `f` on a uniform partition of `[a, b]`, doubling the number of
/// segments until the sampled error is at most `0.95Δ`, then shifts the
/// interpolant by `∓Δ`.
pub fn build_delta_estimators<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    delta: f64,
) -> Result<PwlEstimatorPair> {
    if !(a < b) || !a.is_finite() || !b.is_finite() {
        return Err(Error::invalid("estimator interval must be finite with a < b"));
    }
    if !(delta > 0.0) {
        return Err(Error::invalid("Δ must be positive"));
    }
    let mut segments = 1;
    loop {
        let h = (b - a) / segments as f64;
        let breakpoints: Vec<f64> = (0..=segments)
            .map(|i| if i == segments { b } else { a + i as f64 * h })
            .collect();
        let values: Vec<f64> = breakpoints.iter().map(|&x| f(x)).collect();
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("function is not finite on the interval"));
        }
        let mut err: f64 = 0.0;
        for i in 0..segments {
            let (x0, x1) = (breakpoints[i], breakpoints[i + 1]);
            for k in 1..=SAMPLES_PER_SEGMENT {
                let s = k as f64 / (SAMPLES_PER_SEGMENT + 1) as f64;
                let x = x0 + s * (x1 - x0);
                let g = values[i] + s * (values[i + 1] - values[i]);
                err = err.max((f(x) - g).abs());
            }
        }
        if err <= ACCEPT_FRACTION * delta {
            return Ok(PwlEstimatorPair {
                breakpoints,
                values,
                delta,
            });
        }
        if segments >= MAX_SEGMENTS {
            return Err(Error::NoConvergence {
                solver: "piecewise linear approximation",
                detail: format!("sampled error {err} > Δ = {delta} at {segments} segments"),
                trace: vec![],
            });
        }
        segments *= 2;
    }
}
