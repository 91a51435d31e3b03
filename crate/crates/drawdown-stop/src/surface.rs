//! The value surface `V̄(x, s)` off the diagonal.
//!
//! Once the threshold `l* = l*(s)` is known, the value from any state
//! `(x, s)` with `x ≤ s` is a classical two-sided exit computation on the
//! interval `[s − l*, s]`:
//!
//! - exit at the top refreshes the maximum and continues with the diagonal
//!   value `V(s, s)`, discounted by the ratio `W(u)/W(l*)`,
//!   `u = l* + x − s`;
//! - creeping out at the bottom stops exactly on the threshold;
//! - a jump out either stops inside `(s − b, s − l*)` or overshoots into
//!   ruin, priced with the killed potential kernel
//!   `(W(u)/W(l*))·W(y) − W(y + x − s)`.
//!
//! With exponential payoffs and jumps, all kernels reduce to exponential
//! integrals, so the surface is closed form everywhere. Deeper states are
//! immediate: between the threshold and the ruin barrier the controller
//! stops on the spot (`V̄ = g`), and beyond the barrier the game is over
//! (`V̄ = −k`).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::numerics::{exp_integral, CompensatedSum};
use crate::solver::{ExcursionSolver, LevelChoice};
use crate::{Error, Result};

/// Which branch of the value surface a state falls in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Region {
    /// Drawdown below the threshold: the controller keeps playing.
    Continue,
    /// Drawdown between threshold and ruin barrier: stop immediately.
    Stop,
    /// Drawdown beyond the barrier: the process is absorbed.
    Ruined,
}

impl Region {
    /// Lower-case name as written to CSV output.
    pub fn as_str(self) -> &'static str {
        match self {
            Region::Continue => "continue",
            Region::Stop => "stop",
            Region::Ruined => "ruined",
        }
    }
}

impl std::fmt::Display for Region {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One sampled state of the value surface.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurfacePoint {
    /// Current position.
    pub x: f64,
    /// Running maximum; `x <= s`.
    pub s: f64,
    /// Total value `V̄(x, s)` including the running-reward potential.
    pub value: f64,
    /// Branch the state falls in.
    pub region: Region,
}

impl ExcursionSolver {
    /// The value surface at one state; runs the threshold optimisation at
    /// `s` internally. `x > s` is a domain error.
    pub fn value_surface(&self, x: f64, s: f64) -> Result<f64> {
        let choice = self.optimize_level(s);
        self.value_surface_at(x, s, &choice)
    }

    /// The value surface at one state, reusing an already-computed
    /// [`LevelChoice`] for `s` — the shape the grid sampler and the
    /// variational-inequality check use.
    pub fn value_surface_at(&self, x: f64, s: f64, choice: &LevelChoice) -> Result<f64> {
        if !(x.is_finite() && s.is_finite()) {
            return Err(Error::Domain(format!(
                "value surface needs finite coordinates, got ({x}, {s})"
            )));
        }
        if x > s {
            return Err(Error::Domain(format!(
                "value surface needs x <= s, got x = {x} above s = {s}"
            )));
        }
        Ok(match self.classify(x, s, choice.l_star) {
            Region::Continue => self.continue_value(x, s, choice),
            Region::Stop => self.bundle.stop_reward.eval(x),
            Region::Ruined => -self.bundle.ruin_penalty.eval(x),
        })
    }

    /// Which branch the state `(x, s)` falls in for threshold `l_star`.
    /// Both seams belong to the shallower branch, with one-ulp-scale slack
    /// so that coordinates computed as `s - l_star` classify stably.
    pub fn classify(&self, x: f64, s: f64, l_star: f64) -> Region {
        let drawdown = s - x;
        let slack = 1e-12 * s.abs().max(1.0);
        if drawdown > self.b + slack {
            Region::Ruined
        } else if drawdown > l_star + slack {
            Region::Stop
        } else {
            Region::Continue
        }
    }

    /// Sample the surface on a grid: for each maximum in `s_values`, `n_x`
    /// equally spaced positions from `s - b - depth_below` up to `s`. Rows
    /// share one threshold optimisation and are computed in parallel.
    pub fn surface_points(
        &self,
        s_values: &[f64],
        n_x: usize,
        depth_below: f64,
    ) -> Result<Vec<SurfacePoint>> {
        if s_values.is_empty() {
            return Err(Error::Domain("surface grid needs at least one s".into()));
        }
        if n_x < 2 {
            return Err(Error::Domain(format!(
                "surface grid needs at least 2 positions per row, got {n_x}"
            )));
        }
        if !(depth_below.is_finite() && depth_below >= 0.0) {
            return Err(Error::Domain(format!(
                "depth below the barrier must be nonnegative, got {depth_below}"
            )));
        }
        let row = |&s: &f64| -> Result<Vec<SurfacePoint>> {
            if !s.is_finite() {
                return Err(Error::Domain(format!("surface grid got s = {s}")));
            }
            let choice = self.optimize_level(s);
            let lo = s - self.b - depth_below;
            (0..n_x)
                .map(|i| {
                    let x = lo + (s - lo) * i as f64 / (n_x - 1) as f64;
                    // Land the last sample exactly on the diagonal.
                    let x = if i == n_x - 1 { s } else { x };
                    Ok(SurfacePoint {
                        x,
                        s,
                        value: self.value_surface_at(x, s, &choice)?,
                        region: self.classify(x, s, choice.l_star),
                    })
                })
                .collect()
        };
        let rows: Vec<Vec<SurfacePoint>> = if s_values.len() >= 16 {
            s_values.par_iter().map(row).collect::<Result<_>>()?
        } else {
            s_values.iter().map(row).collect::<Result<_>>()?
        };
        Ok(rows.into_iter().flatten().collect())
    }

    /// Branch (continue-region) value by the two-sided exit decomposition.
    /// Also consumed by the variational-inequality check, which evaluates
    /// this branch on its own grids.
    pub(crate) fn continue_value(&self, x: f64, s: f64, choice: &LevelChoice) -> f64 {
        let fbar = self.bundle.resolvent.eval(x);
        let l = choice.l_star;
        if l <= 0.0 {
            // The continue region is just the diagonal; exiting it means
            // stopping, so the net value is the immediate-stop payoff.
            return fbar + choice.value;
        }
        let u = (l + x - s).max(0.0);
        let (wl, wl1) = (self.scale.w(l), self.scale.w_prime(l));
        let (wu, wu1) = (self.scale.w(u), self.scale.w_prime(u));
        let ratio = wu / wl;
        let mut v = fbar + ratio * choice.value;
        let s2 = self.model.sigma * self.model.sigma;
        v += 0.5 * s2 * self.bundle.net_reward.eval(s - l) * (wu1 - ratio * wl1);
        if let Some((_, rho)) = self.model.jumps.params() {
            let mut bl = CompensatedSum::new();
            let mut bu = CompensatedSum::new();
            for t in &self.scale.terms {
                bl.add(t.weight * exp_integral(t.theta + rho, 0.0, l));
                bu.add(t.weight * exp_integral(t.theta + rho, 0.0, u));
            }
            let shift = (rho * (s - x)).exp();
            v += self.jump_c(s, l) * (ratio * bl.value() - shift * bu.value());
        }
        v
    }
}
