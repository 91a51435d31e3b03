//! Drawdown-indexed stopping strategies.
//!
//! A strategy is a level curve `l(s) >= 0` over the running maximum `s`: the
//! agent stops the first time the drawdown `S_t - X_t` reaches `l(S_t)`.
//! Solver output arrives on a finite grid of maxima; between knots the curve
//! is interpolated linearly and beyond the grid it is extended by its
//! endpoint values, which is also the convention the Monte Carlo engine and
//! the discount integrals rely on.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Piecewise-linear stopping boundary `l(s)` with constant extension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyCurve {
    /// Strictly increasing grid of running-maximum values.
    pub s: Vec<f64>,
    /// Boundary level at each grid point; within `[0, b]`.
    pub l: Vec<f64>,
    /// Ruin threshold the strategy is played against; levels never exceed it.
    pub b: f64,
}

impl StrategyCurve {
    /// Build a curve from knots, validating shape, bounds and monotonicity.
    pub fn new(s: Vec<f64>, l: Vec<f64>, b: f64) -> Result<Self> {
        if !b.is_finite() || b <= 0.0 {
            return Err(Error::Domain(format!(
                "strategy curve needs a positive finite ruin threshold, got {b}"
            )));
        }
        if s.is_empty() || s.len() != l.len() {
            return Err(Error::Domain(format!(
                "strategy curve needs matching non-empty knot vectors, got {} and {}",
                s.len(),
                l.len()
            )));
        }
        // Non-finite knots are caught by the per-knot check below, so the
        // direct comparison is NaN-safe here.
        for w in s.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::Domain(format!(
                    "strategy grid must be strictly increasing, got {} then {}",
                    w[0], w[1]
                )));
            }
        }
        for (&si, &li) in s.iter().zip(&l) {
            if !si.is_finite() || !li.is_finite() || li < 0.0 || li > b {
                return Err(Error::Domain(format!(
                    "invalid strategy knot l({si}) = {li} with threshold {b}"
                )));
            }
        }
        Ok(Self { s, l, b })
    }

    /// The curve that stops at drawdown `level` for every maximum.
    pub fn constant(level: f64, b: f64) -> Result<Self> {
        Self::new(vec![0.0], vec![level], b)
    }

    /// Number of knots.
    pub fn len(&self) -> usize {
        self.s.len()
    }

    /// True when the curve has no knots (never constructed by `new`).
    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }

    /// Evaluate `l(s)` by binary search over the knots.
    pub fn eval(&self, s: f64) -> f64 {
        let mut hint = 0;
        self.eval_hinted(s, &mut hint)
    }

    /// Evaluate `l(s)` starting the knot search from `*hint`, updating the
    /// hint. Amortised O(1) when consecutive queries move monotonically,
    /// which is what the running maximum does along a simulated path.
    pub fn eval_hinted(&self, s: f64, hint: &mut usize) -> f64 {
        let n = self.s.len();
        if n == 1 || s <= self.s[0] {
            *hint = 0;
            return self.l[0];
        }
        if s >= self.s[n - 1] {
            *hint = n - 2;
            return self.l[n - 1];
        }
        let mut i = (*hint).min(n - 2);
        if self.s[i] <= s && s <= self.s[i + 1] {
            // Fast path: still in the hinted segment.
        } else if self.s[i + 1] < s {
            while self.s[i + 1] < s {
                i += 1;
            }
        } else {
            while self.s[i] > s {
                i -= 1;
            }
        }
        *hint = i;
        let t = (s - self.s[i]) / (self.s[i + 1] - self.s[i]);
        // Exact at the right knot, so a query landing on a grid point reads
        // the stored level regardless of which segment resolved it.
        if t == 1.0 {
            self.l[i + 1]
        } else {
            self.l[i] + t * (self.l[i + 1] - self.l[i])
        }
    }

    /// Largest boundary level on the grid.
    pub fn max_level(&self) -> f64 {
        self.l.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Smallest boundary level on the grid.
    pub fn min_level(&self) -> f64 {
        self.l.iter().cloned().fold(f64::INFINITY, f64::min)
    }
}
