//! Banded symmetric positive definite systems and scalar bisection.

const PIVOT_FLOOR: f64 = 1e-14;

/// Symmetric matrix stored by its lower band: `data[i * (bw + 1) + d] = A[i][i − d]`.
#[derive(Debug, Clone)]
pub(crate) struct BandedSpd {
    n: usize,
    bw: usize,
    data: Vec<f64>,
    /// Symmetric diagonal scaling applied before factoring.
    scale: Vec<f64>,
}

impl BandedSpd {
    pub(crate) fn zeros(n: usize, bw: usize) -> Self {
        BandedSpd {
            n,
            bw,
            data: vec![0.0; n * (bw + 1)],
            scale: vec![1.0; n],
        }
    }

    pub(crate) fn clear(&mut self) {
        self.data.iter_mut().for_each(|v| *v = 0.0);
    }

    /// Adds `v` to `A[i][j]` (and by symmetry `A[j][i]`). Off-diagonal entries
    /// are added once.
    #[inline]
    pub(crate) fn add(&mut self, i: usize, j: usize, v: f64) {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        let d = r - c;
        debug_assert!(d <= self.bw);
        self.data[r * (self.bw + 1) + d] += v;
    }

    /// In-place Cholesky of `D A D = L Lᵀ` with `D = diag(A)^{-1/2}`, which
    /// keeps badly scaled barrier Hessians factorable. Pivots lost to rounding
    /// are floored, so the factor is that of a slightly perturbed matrix.
    /// Returns false on a nonpositive diagonal or non-finite entries.
    pub(crate) fn factor(&mut self) -> bool {
        let w = self.bw + 1;
        for i in 0..self.n {
            let d = self.data[i * w];
            if !(d > 0.0) || !d.is_finite() {
                return false;
            }
            self.scale[i] = 1.0 / d.sqrt();
        }
        for i in 0..self.n {
            let lo = i.saturating_sub(self.bw);
            for j in lo..=i {
                self.data[i * w + (i - j)] *= self.scale[i] * self.scale[j];
            }
        }
        for i in 0..self.n {
            let lo = i.saturating_sub(self.bw);
            for j in lo..=i {
                let mut s = self.data[i * w + (i - j)];
                let klo = lo.max(j.saturating_sub(self.bw));
                for k in klo..j {
                    s -= self.data[i * w + (i - k)] * self.data[j * w + (j - k)];
                }
                if j == i {
                    if !s.is_finite() {
                        return false;
                    }
                    // After scaling the diagonal is one, so a pivot this small
                    // is rounding on a nearly singular direction; floor it.
                    self.data[i * w] = s.max(PIVOT_FLOOR).sqrt();
                } else {
                    self.data[i * w + (i - j)] = s / self.data[j * w];
                }
            }
        }
        true
    }

    /// Solves with the factor from [`BandedSpd::factor`].
    pub(crate) fn solve(&self, b: &[f64]) -> Vec<f64> {
        let w = self.bw + 1;
        let n = self.n;
        let mut y: Vec<f64> = b.iter().zip(&self.scale).map(|(v, d)| v * d).collect();
        for i in 0..n {
            let lo = i.saturating_sub(self.bw);
            let mut s = y[i];
            for k in lo..i {
                s -= self.data[i * w + (i - k)] * y[k];
            }
            y[i] = s / self.data[i * w];
        }
        for i in (0..n).rev() {
            let hi = (i + self.bw).min(n - 1);
            let mut s = y[i];
            for k in i + 1..=hi {
                s -= self.data[k * w + (k - i)] * y[k];
            }
            y[i] = s / self.data[i * w];
        }
        for (v, d) in y.iter_mut().zip(&self.scale) {
            *v *= d;
        }
        y
    }
}

/// Bisection on `[lo, hi]` where `f(lo)` and `f(hi)` have opposite signs (or
/// one is zero). Returns the final bracket `(lo, hi)` with the sign of
/// `f(lo)` preserved at the left end.
pub(crate) fn bisect<F: FnMut(f64) -> f64>(
    mut f: F,
    mut lo: f64,
    mut hi: f64,
    tol: f64,
    max_iter: usize,
) -> (f64, f64) {
    let lo_positive = f(lo) > 0.0;
    for _ in 0..max_iter {
        if (hi - lo).abs() <= tol {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo.min(hi) || mid >= lo.max(hi) {
            break;
        }
        if (f(mid) > 0.0) == lo_positive {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (lo, hi)
}

/// Grows `hi` geometrically from `start` until `pred(hi)` holds.
pub(crate) fn grow_until<P: FnMut(f64) -> bool>(
    mut pred: P,
    start: f64,
    factor: f64,
    max_steps: usize,
) -> Option<f64> {
    let mut hi = start;
    for _ in 0..max_steps {
        if pred(hi) {
            return Some(hi);
        }
        hi *= factor;
    }
    None
}
