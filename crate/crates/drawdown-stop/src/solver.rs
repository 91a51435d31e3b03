//! The excursion-level solver: threshold optimisation over the drawdown.
//!
//! For each running-maximum level `s` the controller chooses how deep an
//! excursion below `s` may run before stopping. Stopping at drawdown `z`
//! earns the stop reward, letting the excursion reach `b` first forfeits it
//! and pays the ruin penalty. The one-excursion trade-off is captured by
//!
//! ```text
//! G_s(z) = F_s(z) * W(z) / W'(z),     z in [0, b],
//! ```
//!
//! where `F_s` aggregates three discounted fluxes of the excursion measure:
//! the creeping (diffusion) part that ends exactly at depth `z`, jumps from
//! depth `y < z` that land in the stop band `(z, b]`, and jumps that
//! overshoot `b` into ruin. With exponential payoffs and exponential jumps
//! each flux is a finite sum of exponentials in every variable, so `G_s`
//! evaluates in closed form — no quadrature anywhere on the hot path (the
//! tests recover the same numbers by adaptive quadrature over the jump
//! height).
//!
//! The maximiser `l*(s)` of `G_s` is the optimal threshold curve. Because
//! `G_s` can be bimodal, maximisation is a dense scan plus golden-section
//! polish, and the solver tracks *both* top maximizers: where the winning
//! branch changes, regimes switch and turning points are reported.
//!
//! [`ExcursionSolver::integral_value`] prices an *arbitrary* curve by the
//! survival-weighted integral of the excursion flux along the maximum. It is
//! an independent representation of the strategy value and the quantity the
//! Monte Carlo oracle estimates; see the crate README for how it relates to
//! the closed-form diagonal value.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::model::LevyModel;
use crate::numerics::{bisect_sign_change, exp_integral, golden_section_max, CompensatedSum};
use crate::payoff::PayoffBundle;
use crate::scale::ScaleFunction;
use crate::strategy::StrategyCurve;
use crate::{Error, Result};

/// z-scan resolution for [`ExcursionSolver::optimize_level`]; the objective
/// can be bimodal, so pure local search is unsafe.
const Z_SCAN_POINTS: usize = 512;

/// Golden-section refinement tolerance on the argmax location.
const GOLDEN_Z_TOL: f64 = 1e-8;

/// Bisection tolerance on turning-point locations in `s`.
const TURNING_TOL: f64 = 1e-6;

/// Argmax jump across one grid cell (as a fraction of `b`) that flags a
/// branch switch between distant maximizers.
const BRANCH_JUMP_FRACTION: f64 = 0.5;

/// Relative distance from `b` below which an argmax counts as sitting on the
/// cap (the ruin threshold itself).
const CAP_ATTACH_REL: f64 = 1e-6;

/// Relative backward-difference step for the cap-slope detachment test.
const CAP_SLOPE_H: f64 = 1e-6;

/// Half-width, as a fraction of `b`, of the golden window used to track a
/// single branch of the objective from a seed argmax.
const BRANCH_WINDOW_FRACTION: f64 = 0.125;

/// Relative value window treated as an exact argmax tie, in which case the
/// smaller maximizer (earlier stop) is reported — deterministic output.
const TIE_EXACT_REL: f64 = 1e-9;

/// Relative value window for reporting a secondary maximizer.
const TIE_REPORT_REL: f64 = 1e-3;

/// Minimum separation (fraction of `b`) for two maximizers to count as
/// distinct branches rather than one blurred optimum.
const DISTINCT_Z_REL: f64 = 1e-6;

/// Threshold levels below this count as zero: the excursion intensity
/// diverges there and the strategy stops the process surely.
const LEVEL_EPS: f64 = 1e-6;

/// Accumulated intensity at which the survival factor (below `e^{-45} ≈
/// 3e-20`) is treated as fully collapsed and the outer integral ends.
const LAMBDA_CUTOFF: f64 = 45.0;

/// Knot-to-knot level change (fraction of `b`) treated as a genuine branch
/// jump when marching the outer integral: the level is held at its left
/// value across the cell and switches at the right knot, rather than being
/// interpolated through intermediate levels the strategy never uses.
const MARCH_JUMP_FRACTION: f64 = 0.25;

/// Target intensity mass per marching substep of the outer integral; the
/// trapezoid error per step scales with its square.
const MARCH_DLAMBDA: f64 = 0.02;

/// Block length for marching the constant extension beyond the last knot.
const MARCH_TAIL_BLOCK: f64 = 1.0;

/// Range guard for the outer integral: if the survival factor has not
/// collapsed within this distance, the result is flagged as truncated.
const MARCH_MAX_RANGE: f64 = 1e4;

/// Outcome of maximising the excursion objective at one maximum level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelChoice {
    /// The maximizer `l*(s)`, in `[0, b]`.
    pub l_star: f64,
    /// The objective value `G_s(l*(s))`, i.e. `V(s, s)`.
    pub value: f64,
    /// A distinct second maximizer `(z, G_s(z))`, reported when its value is
    /// within the tie window of the best — the signature of a regime change.
    pub secondary: Option<(f64, f64)>,
}

/// How the optimal threshold moves through a turning point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TurningKind {
    /// Two distant maximizers swap ranks; `l*` jumps discontinuously.
    BranchSwitch,
    /// The argmax leaves the cap `z = b` smoothly: the slope of the
    /// objective at the cap changes sign and an interior maximum peels off.
    CapDetach,
}

/// A refined regime boundary of the threshold curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TurningPoint {
    /// Maximum level at which the switch happens.
    pub s: f64,
    /// Discontinuous swap or smooth detachment.
    pub kind: TurningKind,
    /// Argmax on the branch active just below `s`.
    pub l_before: f64,
    /// Argmax on the branch active just above `s`.
    pub l_after: f64,
}

/// Output of [`ExcursionSolver::solve_curve`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    /// The optimal threshold curve `l*` on the requested grid.
    pub curve: StrategyCurve,
    /// Diagonal value `V(s, s) = G_s(l*(s))` per grid point.
    pub v_diag: Vec<f64>,
    /// Regime boundaries found between grid points, refined by bisection.
    pub turning_points: Vec<TurningPoint>,
    /// Optional `(z, G_s(z))` samples per grid point for plot export; not
    /// filled by `solve_curve` (see [`ExcursionSolver::sample_objective`]).
    pub objective_samples: Option<Vec<Vec<(f64, f64)>>>,
}

/// Result of pricing a threshold curve by the outer excursion integral.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegralValue {
    /// Total value: excursion part plus the terminal lump.
    pub value: f64,
    /// `∫ exp(-Λ(m)) F_m(l(m)) dm` accumulated up to the end point.
    pub excursion_part: f64,
    /// Terminal payoff collected if the curve collapses to zero at a knot
    /// while survival is still positive (the process stops there surely).
    pub lump: f64,
    /// Maximum level at which the march ended.
    pub m_end: f64,
    /// Survival factor `exp(-Λ)` remaining at the end point.
    pub survival: f64,
    /// True when the range guard tripped before the survival factor
    /// collapsed — the reported value then misses tail mass.
    pub truncated: bool,
}

/// Running state of the outer-integral march.
struct MarchState {
    lambda: f64,
    flux: CompensatedSum,
    m_last: f64,
    done: bool,
}

/// Solver for the optimal drawdown threshold of one model/payoff/threshold
/// configuration. All methods are pure; `solve_curve` parallelises over grid
/// points with deterministic output.
#[derive(Debug, Clone, PartialEq)]
pub struct ExcursionSolver {
    /// The driving process.
    pub model: LevyModel,
    /// q-scale function of the model at the bundle's discount rate.
    pub scale: ScaleFunction,
    /// Payoffs and their potentials.
    pub bundle: PayoffBundle,
    /// Ruin threshold: the drawdown level at which the process is absorbed.
    pub b: f64,
}

impl ExcursionSolver {
    /// Build a solver, checking that every payoff exponent keeps the jump
    /// integrals and the outer integral convergent.
    pub fn new(model: LevyModel, bundle: PayoffBundle, b: f64) -> Result<Self> {
        model.validate()?;
        if !(b.is_finite() && b > 0.0) {
            return Err(Error::Domain(format!(
                "ruin threshold must be positive and finite, got {b}"
            )));
        }
        let scale = ScaleFunction::new(&model, bundle.q)?;
        let terms = bundle
            .net_reward
            .terms
            .iter()
            .chain(bundle.net_penalty.terms.iter());
        for t in terms {
            if let Some((_, rho)) = model.jumps.params() {
                if rho + t.gamma <= 0.0 {
                    return Err(Error::InvalidPayoff(format!(
                        "payoff exponent {} at or below the negated jump rate -{rho} \
                         makes the jump-height integral diverge",
                        t.gamma
                    )));
                }
            }
            // The outer integral over the maximum needs every payoff
            // exponent to grow slower than the tail intensity Phi(q).
            if t.gamma > 0.0 && !model.check_potential_condition(t.gamma, bundle.q) {
                return Err(Error::PotentialDiverges {
                    gamma: t.gamma,
                    psi: model.laplace_exponent(t.gamma),
                    q: bundle.q,
                });
            }
        }
        Ok(Self {
            model,
            scale,
            bundle,
            b,
        })
    }

    /// The excursion objective `G_s(z) = F_s(z) W(z) / W'(z)`; at `z = 0`
    /// the analytic limit `(g - f̄)(s)` — the immediate-stopping payoff.
    pub fn objective(&self, s: f64, z: f64) -> f64 {
        assert!(
            (-1e-12..=self.b * (1.0 + 1e-12)).contains(&z),
            "objective needs z in [0, b = {}], got {z}",
            self.b
        );
        if z <= 0.0 {
            return self.bundle.net_reward.eval(s);
        }
        let z = z.min(self.b);
        let (w, w1, w2) = (self.scale.w(z), self.scale.w_prime(z), self.scale.w_second(z));
        let s2 = self.model.sigma * self.model.sigma;
        let mut g = 0.5 * s2 * (w1 * w1 - w * w2) / w1 * self.bundle.net_reward.eval(s - z);
        if let Some((_, rho)) = self.model.jumps.params() {
            // Jump fluxes: the y-integral of the excursion kernel against the
            // height-integrated payoffs is itself an exponential mixture.
            let mut a_int = CompensatedSum::new();
            let mut b_int = CompensatedSum::new();
            for t in &self.scale.terms {
                let e = exp_integral(t.theta + rho, 0.0, z);
                a_int.add(t.weight * t.theta * e);
                b_int.add(t.weight * e);
            }
            g += self.jump_c(s, z) * (w / w1 * a_int.value() - b_int.value());
        }
        g
    }

    /// The excursion flux `F_m(z) = G_m(z) W'(z) / W(z)`. Defined for
    /// `z in [0, b]`; at `z = 0` the intensity diverges and the flux is the
    /// signed-infinite continuity limit.
    pub fn big_f(&self, m: f64, z: f64) -> f64 {
        assert!(
            (-1e-12..=self.b * (1.0 + 1e-12)).contains(&z),
            "big_f needs z in [0, b = {}], got {z}",
            self.b
        );
        if z <= 0.0 {
            let nr = self.bundle.net_reward.eval(m);
            return if nr == 0.0 {
                0.0
            } else {
                nr.signum() * f64::INFINITY
            };
        }
        let z = z.min(self.b);
        self.objective(m, z) * self.scale.excursion_intensity(z)
    }

    /// Uniform `(z, G_s(z))` samples over `[0, b]` for plotting/export.
    pub fn sample_objective(&self, s: f64, n: usize) -> Vec<(f64, f64)> {
        let n = n.max(2);
        (0..n)
            .map(|i| {
                let z = self.b * i as f64 / (n - 1) as f64;
                (z, self.objective(s, z))
            })
            .collect()
    }

    /// Maximise `G_s` over `[0, b]`: dense scan, golden-section polish of
    /// every local maximum, exact endpoint candidates, and tie handling.
    pub fn optimize_level(&self, s: f64) -> LevelChoice {
        let b = self.b;
        let step = b / (Z_SCAN_POINTS - 1) as f64;
        let vals: Vec<f64> = (0..Z_SCAN_POINTS)
            .map(|i| self.objective(s, (step * i as f64).min(b)))
            .collect();

        let mut cands: Vec<(f64, f64)> = vec![(0.0, vals[0]), (b, vals[Z_SCAN_POINTS - 1])];
        for i in 0..Z_SCAN_POINTS {
            let left_ok = i == 0 || vals[i] >= vals[i - 1];
            let right_ok = i == Z_SCAN_POINTS - 1 || vals[i] >= vals[i + 1];
            if left_ok && right_ok {
                let lo = step * i.saturating_sub(1) as f64;
                let hi = (step * (i + 1) as f64).min(b);
                let (z, v) = golden_section_max(|z| self.objective(s, z.min(b)), lo, hi, GOLDEN_Z_TOL);
                cands.push((z.clamp(0.0, b), v));
            }
        }

        // Merge candidates that refined to the same point, keeping the best.
        cands.sort_by(|p, q| p.0.partial_cmp(&q.0).unwrap());
        let merge_tol = (2.0 * GOLDEN_Z_TOL).max(1e-7 * b);
        let mut merged: Vec<(f64, f64)> = Vec::new();
        for c in cands {
            match merged.last_mut() {
                Some(last) if (c.0 - last.0).abs() <= merge_tol => {
                    if c.1 > last.1 {
                        *last = c;
                    }
                }
                _ => merged.push(c),
            }
        }

        merged.sort_by(|p, q| q.1.partial_cmp(&p.1).unwrap());
        let best_value = merged[0].1;
        let exact_window = TIE_EXACT_REL * best_value.abs().max(1.0);
        let mut best = merged[0];
        for c in &merged {
            if best_value - c.1 <= exact_window && c.0 < best.0 {
                best = *c;
            }
        }
        let report_window = TIE_REPORT_REL * best.1.abs().max(1.0);
        let secondary = merged
            .iter()
            .filter(|c| (c.0 - best.0).abs() > DISTINCT_Z_REL * b)
            .find(|c| best.1 - c.1 <= report_window)
            .copied();
        LevelChoice {
            l_star: best.0,
            value: best.1,
            secondary,
        }
    }

    /// Optimise over a grid of maxima and refine the regime boundaries.
    pub fn solve_curve(&self, s_min: f64, s_max: f64, n: usize) -> Result<SolveResult> {
        if !(s_min.is_finite() && s_max.is_finite() && s_min < s_max) {
            return Err(Error::Domain(format!(
                "solve_curve needs s_min < s_max, got [{s_min}, {s_max}]"
            )));
        }
        if n < 2 {
            return Err(Error::Domain(format!(
                "solve_curve needs at least 2 grid points, got {n}"
            )));
        }
        let grid: Vec<f64> = (0..n)
            .map(|i| s_min + (s_max - s_min) * i as f64 / (n - 1) as f64)
            .collect();
        let choices: Vec<LevelChoice> = if n >= 64 {
            grid.par_iter().map(|&s| self.optimize_level(s)).collect()
        } else {
            grid.iter().map(|&s| self.optimize_level(s)).collect()
        };
        let levels: Vec<f64> = choices.iter().map(|c| c.l_star).collect();
        let v_diag: Vec<f64> = choices.iter().map(|c| c.value).collect();

        let mut turning_points = Vec::new();
        for i in 0..n - 1 {
            let (li, lj) = (levels[i], levels[i + 1]);
            if (li - lj).abs() > BRANCH_JUMP_FRACTION * self.b {
                turning_points.push(self.refine_branch_switch(grid[i], grid[i + 1], li, lj));
            } else {
                let att_i = li >= self.b * (1.0 - CAP_ATTACH_REL);
                let att_j = lj >= self.b * (1.0 - CAP_ATTACH_REL);
                if att_i != att_j {
                    turning_points.push(self.refine_cap_detach(grid[i], grid[i + 1], li, lj, att_i));
                }
            }
        }

        Ok(SolveResult {
            curve: StrategyCurve::new(grid, levels, self.b)?,
            v_diag,
            turning_points,
            objective_samples: None,
        })
    }

    /// Value of an arbitrary threshold curve started from maximum `s`:
    ///
    /// ```text
    /// ∫_s^∞ exp(-∫_s^m ν(l(u)) du) · F_m(l(m)) dm,    ν = W'/W,
    /// ```
    ///
    /// marched with intensity-adapted substeps. The march ends when the
    /// survival factor collapses, or with a terminal lump `exp(-Λ)·(g-f̄)`
    /// where the curve drops to zero at a knot (the strategy then stops on
    /// the spot). Branch jumps between knots use the left level across the
    /// cell — the interpolated intermediate levels are an artifact of the
    /// piecewise-linear storage, not of the strategy.
    pub fn integral_value(&self, s: f64, curve: &StrategyCurve) -> Result<IntegralValue> {
        if !s.is_finite() {
            return Err(Error::Domain(format!(
                "integral_value needs a finite start, got {s}"
            )));
        }
        self.check_curve(curve)?;

        if self.march_level_at(curve, s) < LEVEL_EPS {
            let v = self.bundle.net_reward.eval(s);
            return Ok(IntegralValue {
                value: v,
                excursion_part: 0.0,
                lump: v,
                m_end: s,
                survival: 1.0,
                truncated: false,
            });
        }

        let mut st = MarchState {
            lambda: 0.0,
            flux: CompensatedSum::new(),
            m_last: s,
            done: false,
        };
        let mut lump = 0.0;
        let mut lumped = false;
        let mut truncated = false;
        let n = curve.len();

        for j in 0..n.saturating_sub(1) {
            let (k0, k1) = (curve.s[j], curve.s[j + 1]);
            if k1 <= s {
                continue;
            }
            let (lk0, lk1) = (curve.l[j], curve.l[j + 1]);
            let a0 = s.max(k0);
            if (lk1 - lk0).abs() > MARCH_JUMP_FRACTION * self.b {
                self.march_segment(a0, k1, lk0, lk0, true, &mut st);
            } else {
                let l_a0 = lk0 + (a0 - k0) / (k1 - k0) * (lk1 - lk0);
                self.march_segment(a0, k1, l_a0, lk1, true, &mut st);
            }
            if st.done {
                break;
            }
            if lk1 < LEVEL_EPS {
                lump = (-st.lambda).exp() * self.bundle.net_reward.eval(k1);
                st.m_last = k1;
                lumped = true;
                break;
            }
        }

        if !st.done && !lumped {
            let l_tail = curve.l[n - 1];
            let mut m0 = st.m_last.max(curve.s[n - 1]).max(s);
            loop {
                let m1 = m0 + MARCH_TAIL_BLOCK;
                self.march_segment(m0, m1, l_tail, l_tail, true, &mut st);
                m0 = m1;
                if st.done {
                    break;
                }
                if m0 - s > MARCH_MAX_RANGE {
                    truncated = true;
                    break;
                }
            }
        }

        Ok(IntegralValue {
            value: st.flux.value() + lump,
            excursion_part: st.flux.value(),
            lump,
            m_end: st.m_last,
            survival: (-st.lambda).exp(),
            truncated,
        })
    }

    /// Survival factor `exp(-∫_{s0}^{s1} ν(l(u)) du)` of the strategy from
    /// maximum `s0` to `s1`: the expected discounting the curve applies to
    /// payoffs collected at the later maximum. Returns zero when the curve
    /// collapses before `s1` (the strategy stops surely).
    pub fn discount_along(&self, curve: &StrategyCurve, s0: f64, s1: f64) -> Result<f64> {
        if !(s0.is_finite() && s1.is_finite() && s1 >= s0) {
            return Err(Error::Domain(format!(
                "discount_along needs s0 <= s1, got [{s0}, {s1}]"
            )));
        }
        self.check_curve(curve)?;
        if s1 == s0 {
            return Ok(1.0);
        }
        if self.march_level_at(curve, s0) < LEVEL_EPS {
            return Ok(0.0);
        }

        let mut st = MarchState {
            lambda: 0.0,
            flux: CompensatedSum::new(),
            m_last: s0,
            done: false,
        };
        let n = curve.len();
        for j in 0..n.saturating_sub(1) {
            let (k0, k1) = (curve.s[j], curve.s[j + 1]);
            if k1 <= s0 || st.done {
                continue;
            }
            if k0 >= s1 {
                break;
            }
            let (lk0, lk1) = (curve.l[j], curve.l[j + 1]);
            let a0 = s0.max(k0);
            let a1 = s1.min(k1);
            if (lk1 - lk0).abs() > MARCH_JUMP_FRACTION * self.b {
                self.march_segment(a0, a1, lk0, lk0, false, &mut st);
                if !st.done && a1 == k1 && k1 < s1 && lk1 < LEVEL_EPS {
                    return Ok(0.0);
                }
            } else {
                let t = (lk1 - lk0) / (k1 - k0);
                self.march_segment(a0, a1, lk0 + t * (a0 - k0), lk0 + t * (a1 - k0), false, &mut st);
                if !st.done && a1 == k1 && k1 < s1 && lk1 < LEVEL_EPS {
                    return Ok(0.0);
                }
            }
        }
        if !st.done {
            let start = st.m_last.max(curve.s[n - 1]).max(s0);
            if start < s1 {
                let l_tail = curve.l[n - 1];
                self.march_segment(start, s1, l_tail, l_tail, false, &mut st);
            }
        }
        Ok((-st.lambda).exp())
    }

    /// Height-integrated jump coefficient: the part of the jump fluxes that
    /// depends on `(s, z)` but not on the jump start `y`. The `y`-dependence
    /// of both fluxes is exactly `e^{ρy}`, which is what makes the outer
    /// `y`-integral closed form.
    pub(crate) fn jump_c(&self, s: f64, z: f64) -> f64 {
        let (a, rho) = match self.model.jumps.params() {
            Some(p) => p,
            None => return 0.0,
        };
        let mut acc = CompensatedSum::new();
        for t in &self.bundle.net_reward.terms {
            let r = rho + t.gamma;
            acc.add(t.coef * (t.gamma * s).exp() * ((-r * z).exp() - (-r * self.b).exp()) / r);
        }
        for t in &self.bundle.net_penalty.terms {
            let r = rho + t.gamma;
            acc.add(-t.coef * (t.gamma * s).exp() * (-r * self.b).exp() / r);
        }
        a * rho * acc.value()
    }

    /// Flux of jumps from drawdown `y` landing in the stop band `(z, b]`,
    /// height integral already done. Used by the quadrature cross-checks.
    #[cfg_attr(not(test), allow(dead_code))]
    pub(crate) fn inner_stop(&self, s: f64, y: f64, z: f64) -> f64 {
        let (a, rho) = match self.model.jumps.params() {
            Some(p) => p,
            None => return 0.0,
        };
        let mut acc = 0.0;
        for t in &self.bundle.net_reward.terms {
            let r = rho + t.gamma;
            acc += t.coef
                * (t.gamma * (s - y)).exp()
                * ((r * (y - z)).exp() - (r * (y - self.b)).exp())
                / r;
        }
        a * rho * acc
    }

    /// Flux of jumps from drawdown `y` overshooting the ruin threshold,
    /// weighted by the net penalty. Quadrature cross-check companion.
    #[cfg_attr(not(test), allow(dead_code))]
    pub(crate) fn inner_ruin(&self, s: f64, y: f64) -> f64 {
        let (a, rho) = match self.model.jumps.params() {
            Some(p) => p,
            None => return 0.0,
        };
        let mut acc = 0.0;
        for t in &self.bundle.net_penalty.terms {
            let r = rho + t.gamma;
            acc += t.coef * (t.gamma * (s - y)).exp() * (r * (y - self.b)).exp() / r;
        }
        a * rho * acc
    }

    /// Follow one branch of the objective from a seed argmax: seeds at the
    /// edges are the exact endpoint branches, interior seeds are re-polished
    /// in a golden window around the seed.
    fn branch_eval(&self, s: f64, seed: f64) -> (f64, f64) {
        let b = self.b;
        if seed <= LEVEL_EPS * b.max(1.0) {
            return (0.0, self.objective(s, 0.0));
        }
        if seed >= b * (1.0 - CAP_ATTACH_REL) {
            return (b, self.objective(s, b));
        }
        let w = b * BRANCH_WINDOW_FRACTION;
        let (lo, hi) = ((seed - w).max(0.0), (seed + w).min(b));
        let (z, v) = golden_section_max(|z| self.objective(s, z.min(b)), lo, hi, GOLDEN_Z_TOL);
        (z.clamp(0.0, b), v)
    }

    /// Refine a discontinuous argmax jump to the `s` where the two branch
    /// values cross.
    fn refine_branch_switch(&self, s0: f64, s1: f64, l0: f64, l1: f64) -> TurningPoint {
        let gap = |s: f64| self.branch_eval(s, l0).1 - self.branch_eval(s, l1).1;
        let (g0, g1) = (gap(s0), gap(s1));
        let s_star = if g0 == 0.0 {
            s0
        } else if g1 == 0.0 {
            s1
        } else if g0.signum() != g1.signum() {
            bisect_sign_change(gap, s0, s1, TURNING_TOL)
        } else {
            // The crossover hides inside the cell but both ends lean the same
            // way (can happen when a branch is being born); report the
            // midpoint at grid resolution.
            0.5 * (s0 + s1)
        };
        TurningPoint {
            s: s_star,
            kind: TurningKind::BranchSwitch,
            l_before: self.branch_eval(s_star, l0).0,
            l_after: self.branch_eval(s_star, l1).0,
        }
    }

    /// Refine a smooth detachment from the cap to the `s` where the
    /// objective's slope at `z = b` changes sign.
    fn refine_cap_detach(
        &self,
        s0: f64,
        s1: f64,
        l0: f64,
        l1: f64,
        attached_left: bool,
    ) -> TurningPoint {
        let h = CAP_SLOPE_H * self.b.max(1.0);
        let slope = |s: f64| (self.objective(s, self.b) - self.objective(s, self.b - h)) / h;
        let (d0, d1) = (slope(s0), slope(s1));
        let s_star = if d0.signum() != d1.signum() {
            bisect_sign_change(slope, s0, s1, TURNING_TOL)
        } else {
            // The cap lost by value rather than tangency; fall back to the
            // branch-value crossover.
            let gap = |s: f64| self.branch_eval(s, l0).1 - self.branch_eval(s, l1).1;
            let (g0, g1) = (gap(s0), gap(s1));
            if g0.signum() != g1.signum() {
                bisect_sign_change(gap, s0, s1, TURNING_TOL)
            } else {
                0.5 * (s0 + s1)
            }
        };
        let interior = |s: f64, seed: f64| self.branch_eval(s, seed).0;
        let (l_before, l_after) = if attached_left {
            (self.b, interior(s_star, l1))
        } else {
            (interior(s_star, l0), self.b)
        };
        TurningPoint {
            s: s_star,
            kind: TurningKind::CapDetach,
            l_before,
            l_after,
        }
    }

    /// March one linear level segment of the outer integral, accumulating the
    /// intensity integral (and, optionally, the survival-weighted flux) with
    /// intensity-adapted trapezoid substeps.
    fn march_segment(
        &self,
        m0: f64,
        m1: f64,
        l0: f64,
        l1: f64,
        with_flux: bool,
        st: &mut MarchState,
    ) {
        let span = m1 - m0;
        if span <= 0.0 || st.done {
            return;
        }
        let slope = (l1 - l0) / span;
        let mut m = m0;
        let mut nu_prev = self.scale.excursion_intensity(l0.clamp(LEVEL_EPS, self.b));
        let mut flux_prev = if with_flux {
            (-st.lambda).exp() * self.big_f(m, l0.clamp(LEVEL_EPS, self.b))
        } else {
            0.0
        };
        while m < m1 {
            let h = (m1 - m).min((MARCH_DLAMBDA / nu_prev).max(1e-12));
            let m_new = if m1 - m - h <= 1e-12 * span { m1 } else { m + h };
            let h = m_new - m;
            let l_new = (l0 + slope * (m_new - m0)).clamp(LEVEL_EPS, self.b);
            let nu_new = self.scale.excursion_intensity(l_new);
            st.lambda += 0.5 * (nu_prev + nu_new) * h;
            if with_flux {
                let flux_new = if st.lambda > LAMBDA_CUTOFF {
                    0.0
                } else {
                    (-st.lambda).exp() * self.big_f(m_new, l_new)
                };
                st.flux.add(0.5 * (flux_prev + flux_new) * h);
                flux_prev = flux_new;
            }
            nu_prev = nu_new;
            m = m_new;
            st.m_last = m;
            if st.lambda > LAMBDA_CUTOFF {
                st.done = true;
                return;
            }
        }
    }

    /// Level the march starts from at `m`: interpolated, except across branch
    /// jumps where the left knot value rules the whole cell.
    fn march_level_at(&self, curve: &StrategyCurve, m: f64) -> f64 {
        let n = curve.len();
        if n == 1 || m <= curve.s[0] {
            return curve.l[0];
        }
        if m >= curve.s[n - 1] {
            return curve.l[n - 1];
        }
        let j = curve.s.partition_point(|&x| x <= m) - 1;
        let (lk0, lk1) = (curve.l[j], curve.l[j + 1]);
        if (lk1 - lk0).abs() > MARCH_JUMP_FRACTION * self.b {
            lk0
        } else {
            let t = (m - curve.s[j]) / (curve.s[j + 1] - curve.s[j]);
            lk0 + t * (lk1 - lk0)
        }
    }

    pub(crate) fn check_curve(&self, curve: &StrategyCurve) -> Result<()> {
        if (curve.b - self.b).abs() > 1e-9 * self.b.max(1.0) {
            return Err(Error::Domain(format!(
                "curve ruin threshold {} does not match the solver's {}",
                curve.b, self.b
            )));
        }
        Ok(())
    }
}
