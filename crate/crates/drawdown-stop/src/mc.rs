//! Pathwise Monte Carlo oracle.
//!
//! Simulates `(X, S)` directly — Euler steps for the Gaussian part, exact
//! exponential jump times inserted between grid points — and executes a
//! threshold strategy: at every event the drawdown `S − X` is compared
//! against the curve level at the current maximum, stopping (or ruining, on
//! a jump overshoot past the barrier) the moment it is exceeded. Every
//! expectation the closed forms claim can be estimated here with nothing
//! shared except the model parameters, which is what makes the oracle an
//! independent check rather than a reformulation.
//!
//! Estimates are deterministic for a fixed seed regardless of worker
//! count: each path owns two counter-addressed random streams (one
//! Gaussian, one for jumps), outcomes are collected by path index, and the
//! reduction is a sequential compensated sum. Antithetic pairs negate the
//! Gaussian stream and replay the jump stream, and the standard error is
//! then computed over pair means.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::numerics::{exp_small, CompensatedSum};
use crate::solver::ExcursionSolver;
use crate::strategy::StrategyCurve;
use crate::{Error, Result};

/// Discount mass `q · horizon` below which time truncation would bias the
/// estimate beyond the reported standard error.
const MIN_DISCOUNTED_HORIZON: f64 = 20.0;

/// Steps between exact re-synchronisations of the incrementally updated
/// discount factor.
const DISCOUNT_RESYNC: u32 = 8192;

/// Simulation parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Euler step for the Gaussian part.
    pub dt: f64,
    /// Time truncation; must satisfy `q · horizon ≥ 20`.
    pub horizon: f64,
    /// Number of paths (pairs count as two).
    pub n_paths: usize,
    /// Base seed; streams are derived per path.
    pub seed: u64,
    /// Pair paths with negated Gaussian increments and shared jumps.
    pub antithetic: bool,
}

impl SimConfig {
    /// Validate and build. The discounted-horizon condition is checked at
    /// simulation entry, where the discount rate is known.
    pub fn new(dt: f64, horizon: f64, n_paths: usize, seed: u64, antithetic: bool) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::InvalidSimConfig(format!(
                "time step must be positive, got {dt}"
            )));
        }
        if !(horizon.is_finite() && horizon > dt) {
            return Err(Error::InvalidSimConfig(format!(
                "horizon must exceed the time step, got {horizon}"
            )));
        }
        if n_paths < 100 {
            return Err(Error::InvalidSimConfig(format!(
                "need at least 100 paths for a meaningful standard error, got {n_paths}"
            )));
        }
        Ok(Self {
            dt,
            horizon,
            n_paths,
            seed,
            antithetic,
        })
    }
}

/// How a simulated path ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StopKind {
    /// Drawdown exceeded the curve with the state still above the barrier.
    Stopped,
    /// A jump carried the drawdown past the barrier in one move.
    Ruined,
    /// The horizon arrived first; only the running reward is collected.
    Truncated,
}

impl std::fmt::Display for StopKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            StopKind::Stopped => "stopped",
            StopKind::Ruined => "ruined",
            StopKind::Truncated => "truncated",
        })
    }
}

/// One simulated path under a threshold strategy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathOutcome {
    /// Discounted realised value: `running + terminal − penalty`.
    pub payoff: f64,
    /// How the path ended.
    pub stop_kind: StopKind,
    /// Stopping, ruin, or truncation time.
    pub tau: f64,
    /// Position at the end.
    pub final_x: f64,
    /// Running maximum at the end.
    pub final_s: f64,
    /// Accumulated `∫ e^{−qt} f(X_t) dt`.
    pub running: f64,
    /// Discounted stop reward credited (zero unless stopped).
    pub terminal: f64,
    /// Discounted ruin penalty debited (zero unless ruined).
    pub penalty: f64,
}

/// Aggregated estimate over all paths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    /// Sample mean of the discounted payoff.
    pub mean: f64,
    /// Standard error (over pair means when antithetic).
    pub se: f64,
    /// Paths simulated.
    pub n_paths: usize,
    /// Paths ending in a stop.
    pub n_stopped: usize,
    /// Paths ending in ruin.
    pub n_ruined: usize,
    /// Paths cut by the horizon.
    pub n_truncated: usize,
    /// Mean accumulated running reward.
    pub mean_running: f64,
    /// Mean discounted stop reward.
    pub mean_terminal: f64,
    /// Mean discounted ruin penalty.
    pub mean_penalty: f64,
    /// Mean end time.
    pub mean_tau: f64,
}

/// Mutable state of one path between events.
struct PathState {
    t: f64,
    x: f64,
    s: f64,
    disc: f64,
    steps: u32,
}

impl PathState {
    fn new(x0: f64, s0: f64) -> Self {
        Self {
            t: 0.0,
            x: x0,
            s: s0,
            disc: 1.0,
            steps: 0,
        }
    }

    /// Advance the diffusion by `delta` with the given standard normal
    /// draw, fold in the discount, and refresh the maximum.
    fn advance(&mut self, model_mu: f64, model_sigma: f64, q: f64, delta: f64, z: f64) {
        if delta > 0.0 {
            self.x += model_mu * delta + model_sigma * delta.sqrt() * z;
            self.t += delta;
            self.disc *= exp_small(-q * delta);
            self.steps += 1;
            if self.steps.is_multiple_of(DISCOUNT_RESYNC) {
                self.disc = (-q * self.t).exp();
            }
        }
        if self.x > self.s {
            self.s = self.x;
        }
    }
}

/// The strategy's verdict at a monitoring instant.
enum Verdict {
    Continue,
    Stop,
    Ruin,
}

impl ExcursionSolver {
    /// Simulate one path of the threshold strategy from `(x0, s0)`.
    ///
    /// Events are Euler grid points plus exact jump times; the drawdown is
    /// monitored at every event (including time zero, so a start beyond the
    /// curve resolves immediately). A zero curve level means stop on the
    /// spot: with `σ > 0` the drawdown enters `(0, ∞)` instantly, so the
    /// hitting time of an empty threshold is zero almost surely.
    ///
    /// Panics if `x0 > s0` or `s0 − x0 > b` is not handled — starts beyond
    /// the barrier are allowed and debit the penalty at time zero.
    pub fn simulate_path(
        &self,
        curve: &StrategyCurve,
        x0: f64,
        s0: f64,
        cfg: &SimConfig,
        path_index: usize,
    ) -> PathOutcome {
        assert!(x0 <= s0, "paths start with x0 <= s0, got ({x0}, {s0})");
        let (pair, negate) = if cfg.antithetic {
            (path_index / 2, path_index % 2 == 1)
        } else {
            (path_index, false)
        };
        let mut g_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        g_rng.set_stream(2 * pair as u64);
        let mut j_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        j_rng.set_stream(2 * pair as u64 + 1);
        let sign = if negate { -1.0 } else { 1.0 };

        let q = self.bundle.q;
        let (mu, sigma) = (self.model.mu, self.model.sigma);
        let jump = self.model.jumps.params();
        let mut next_jump = match jump {
            Some((a, _)) => exp_draw(&mut j_rng, a),
            None => f64::INFINITY,
        };

        let mut st = PathState::new(x0, s0);
        let mut hint = 0usize;
        let mut running = CompensatedSum::new();
        let mut f_prev = st.disc * self.bundle.running.eval(st.x);

        let mut verdict = self.monitor(curve, &st, false, &mut hint);
        loop {
            match verdict {
                Verdict::Continue => {}
                Verdict::Stop => {
                    let terminal = st.disc * self.bundle.stop_reward.eval(st.x);
                    return outcome(&st, StopKind::Stopped, running.value(), terminal, 0.0);
                }
                Verdict::Ruin => {
                    let penalty = st.disc * self.bundle.ruin_penalty.eval(st.x);
                    return outcome(&st, StopKind::Ruined, running.value(), 0.0, penalty);
                }
            }
            if st.t >= cfg.horizon {
                return outcome(&st, StopKind::Truncated, running.value(), 0.0, 0.0);
            }

            let grid_next = (st.t + cfg.dt).min(cfg.horizon);
            let is_jump = next_jump <= grid_next;
            let t_event = if is_jump { next_jump } else { grid_next };
            let delta = t_event - st.t;
            let z: f64 = g_rng.sample(StandardNormal);
            st.advance(mu, sigma, q, delta, sign * z);
            if is_jump {
                let (a, rho) = jump.expect("jump event without jump component");
                st.x -= exp_draw(&mut j_rng, rho);
                next_jump = st.t + exp_draw(&mut j_rng, a);
            }
            let f_now = st.disc * self.bundle.running.eval(st.x);
            running.add(0.5 * (f_prev + f_now) * delta);
            f_prev = f_now;
            verdict = self.monitor(curve, &st, is_jump, &mut hint);
        }
    }

    /// Check the strategy at an event. Diffusion moves cannot overshoot the
    /// barrier in continuous time, so only jump events may ruin.
    fn monitor(
        &self,
        curve: &StrategyCurve,
        st: &PathState,
        jump_event: bool,
        hint: &mut usize,
    ) -> Verdict {
        let y = st.s - st.x;
        let l = curve.eval_hinted(st.s, hint);
        if y > l || l == 0.0 {
            if y > self.b && jump_event {
                Verdict::Ruin
            } else {
                Verdict::Stop
            }
        } else {
            Verdict::Continue
        }
    }

    /// Estimate the strategy value from `(x0, s0)`: the mean discounted
    /// payoff over `cfg.n_paths` simulated paths, with its standard error.
    pub fn estimate_value(
        &self,
        curve: &StrategyCurve,
        x0: f64,
        s0: f64,
        cfg: &SimConfig,
    ) -> Result<McEstimate> {
        self.check_sim(curve, cfg)?;
        if !(x0.is_finite() && s0.is_finite() && x0 <= s0) {
            return Err(Error::Domain(format!(
                "simulation needs x0 <= s0, got ({x0}, {s0})"
            )));
        }
        let outcomes: Vec<PathOutcome> = (0..cfg.n_paths)
            .into_par_iter()
            .map(|i| self.simulate_path(curve, x0, s0, cfg, i))
            .collect();
        Ok(reduce(&outcomes, cfg.antithetic))
    }

    /// Estimate the strategy's survival discount `E[e^{−q T_m}; S ≥ m
    /// before stopping]` from the diagonal start `(s, s)` — the pathwise
    /// counterpart of [`ExcursionSolver::discount_along`].
    pub fn estimate_discount(
        &self,
        curve: &StrategyCurve,
        s: f64,
        m: f64,
        cfg: &SimConfig,
    ) -> Result<McEstimate> {
        self.check_sim(curve, cfg)?;
        if !(s.is_finite() && m.is_finite() && m >= s) {
            return Err(Error::Domain(format!(
                "discount estimation needs s <= m, got ({s}, {m})"
            )));
        }
        let draws: Vec<f64> = (0..cfg.n_paths)
            .into_par_iter()
            .map(|i| self.discount_path(curve, s, m, cfg, i))
            .collect();
        let outcomes: Vec<PathOutcome> = draws
            .iter()
            .map(|&d| PathOutcome {
                payoff: d,
                stop_kind: StopKind::Stopped,
                tau: 0.0,
                final_x: 0.0,
                final_s: 0.0,
                running: 0.0,
                terminal: d,
                penalty: 0.0,
            })
            .collect();
        Ok(reduce(&outcomes, cfg.antithetic))
    }

    /// One path of the discount estimator: `e^{−qt}` at the first time the
    /// maximum reaches `m`, zero if the strategy ends first.
    fn discount_path(
        &self,
        curve: &StrategyCurve,
        s0: f64,
        m: f64,
        cfg: &SimConfig,
        path_index: usize,
    ) -> f64 {
        let (pair, negate) = if cfg.antithetic {
            (path_index / 2, path_index % 2 == 1)
        } else {
            (path_index, false)
        };
        let mut g_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        g_rng.set_stream(2 * pair as u64);
        let mut j_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        j_rng.set_stream(2 * pair as u64 + 1);
        let sign = if negate { -1.0 } else { 1.0 };

        let q = self.bundle.q;
        let (mu, sigma) = (self.model.mu, self.model.sigma);
        let jump = self.model.jumps.params();
        let mut next_jump = match jump {
            Some((a, _)) => exp_draw(&mut j_rng, a),
            None => f64::INFINITY,
        };
        let mut st = PathState::new(s0, s0);
        let mut hint = 0usize;
        loop {
            if st.s >= m {
                return st.disc;
            }
            if matches!(
                self.monitor(curve, &st, false, &mut hint),
                Verdict::Stop | Verdict::Ruin
            ) {
                return 0.0;
            }
            if st.t >= cfg.horizon {
                return 0.0;
            }
            let grid_next = (st.t + cfg.dt).min(cfg.horizon);
            let is_jump = next_jump <= grid_next;
            let t_event = if is_jump { next_jump } else { grid_next };
            let delta = t_event - st.t;
            let z: f64 = g_rng.sample(StandardNormal);
            st.advance(mu, sigma, q, delta, sign * z);
            if is_jump {
                let (a, rho) = jump.expect("jump event without jump component");
                st.x -= exp_draw(&mut j_rng, rho);
                next_jump = st.t + exp_draw(&mut j_rng, a);
                // A jump cannot raise the maximum, but it can trigger the
                // strategy; fall through to the next loop's monitor.
                if matches!(
                    self.monitor(curve, &st, true, &mut hint),
                    Verdict::Stop | Verdict::Ruin
                ) {
                    return 0.0;
                }
            }
        }
    }

    /// Estimate the monitoring bias of the time step: the mean difference
    /// between the payoff observed at cadence `cfg.dt` and at `cfg.dt / 4`
    /// along the *same* trajectory.
    ///
    /// The dynamics here are exact in law at event times (Gaussian
    /// increments plus exact exponential jump times), so the only
    /// discretisation effect is how often the strategy looks at the state.
    /// Both cadences therefore share one simulated path: the coarse monitor
    /// reads every fourth grid event, the fine monitor all of them, and the
    /// difference of their payoffs isolates the bias with a standard error
    /// far below that of two independent runs. The returned estimate's
    /// `mean` is the Richardson bias estimate and `se` its noise;
    /// `|mean| + 3 se` is a conservative bias bound for comparisons at
    /// step `cfg.dt`.
    pub fn estimate_bias(
        &self,
        curve: &StrategyCurve,
        x0: f64,
        s0: f64,
        cfg: &SimConfig,
    ) -> Result<McEstimate> {
        self.check_sim(curve, cfg)?;
        if !(x0.is_finite() && s0.is_finite() && x0 <= s0) {
            return Err(Error::Domain(format!(
                "simulation needs x0 <= s0, got ({x0}, {s0})"
            )));
        }
        let outcomes: Vec<PathOutcome> = (0..cfg.n_paths)
            .into_par_iter()
            .map(|i| self.coupled_path(curve, x0, s0, cfg, i))
            .collect();
        Ok(reduce(&outcomes, cfg.antithetic))
    }

    /// One coupled path: simulate at `cfg.dt / 4`, monitor at both
    /// cadences, return the coarse-minus-fine outcome difference.
    fn coupled_path(
        &self,
        curve: &StrategyCurve,
        x0: f64,
        s0: f64,
        cfg: &SimConfig,
        path_index: usize,
    ) -> PathOutcome {
        let (pair, negate) = if cfg.antithetic {
            (path_index / 2, path_index % 2 == 1)
        } else {
            (path_index, false)
        };
        let mut g_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        g_rng.set_stream(2 * pair as u64);
        let mut j_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        j_rng.set_stream(2 * pair as u64 + 1);
        let sign = if negate { -1.0 } else { 1.0 };

        let q = self.bundle.q;
        let (mu, sigma) = (self.model.mu, self.model.sigma);
        let jump = self.model.jumps.params();
        let mut next_jump = match jump {
            Some((a, _)) => exp_draw(&mut j_rng, a),
            None => f64::INFINITY,
        };
        let dt_fine = 0.25 * cfg.dt;

        let mut st = PathState::new(x0, s0);
        // Per-cadence observer state. The coarse observer sees the position
        // only at every fourth grid event (and at jumps), so it keeps its
        // own running maximum, trapezoid anchor, and stop verdict.
        struct Observer {
            s: f64,
            hint: usize,
            running: CompensatedSum,
            f_prev: f64,
            t_prev: f64,
            done: Option<(StopKind, f64, f64, f64, f64, f64)>,
        }
        let f0 = self.bundle.running.eval(x0);
        let fresh = || Observer {
            s: s0,
            hint: 0,
            running: CompensatedSum::new(),
            f_prev: f0,
            t_prev: 0.0,
            done: None,
        };
        let mut fine = fresh();
        let mut coarse = fresh();
        let mut ticks_since_coarse = 0u32;

        // Shared observation of the path by one cadence's observer.
        let observe = |obs: &mut Observer, st: &PathState, jump_event: bool, sv: &Self| {
            if obs.done.is_some() {
                return;
            }
            if st.x > obs.s {
                obs.s = st.x;
            }
            let f_now = st.disc * sv.bundle.running.eval(st.x);
            obs.running.add(0.5 * (obs.f_prev + f_now) * (st.t - obs.t_prev));
            obs.f_prev = f_now;
            obs.t_prev = st.t;
            let y = obs.s - st.x;
            let l = curve.eval_hinted(obs.s, &mut obs.hint);
            if y > l || l == 0.0 {
                if y > sv.b && jump_event {
                    let penalty = st.disc * sv.bundle.ruin_penalty.eval(st.x);
                    obs.done = Some((StopKind::Ruined, st.t, st.x, obs.s, 0.0, penalty));
                } else {
                    let terminal = st.disc * sv.bundle.stop_reward.eval(st.x);
                    obs.done = Some((StopKind::Stopped, st.t, st.x, obs.s, terminal, 0.0));
                }
            } else if st.t >= cfg.horizon {
                obs.done = Some((StopKind::Truncated, st.t, st.x, obs.s, 0.0, 0.0));
            }
        };

        observe(&mut fine, &st, false, self);
        observe(&mut coarse, &st, false, self);
        while fine.done.is_none() || coarse.done.is_none() {
            let grid_next = (st.t + dt_fine).min(cfg.horizon);
            let is_jump = next_jump <= grid_next;
            let t_event = if is_jump { next_jump } else { grid_next };
            let delta = t_event - st.t;
            let z: f64 = g_rng.sample(StandardNormal);
            st.advance(mu, sigma, q, delta, sign * z);
            if is_jump {
                let (a, rho) = jump.expect("jump event without jump component");
                st.x -= exp_draw(&mut j_rng, rho);
                next_jump = st.t + exp_draw(&mut j_rng, a);
            }
            observe(&mut fine, &st, is_jump, self);
            // The coarse cadence fires on jumps, on every fourth grid
            // event, and at the horizon; jumps reset its stride exactly as
            // they would in a standalone coarse run.
            let coarse_event = if is_jump {
                ticks_since_coarse = 0;
                true
            } else {
                ticks_since_coarse += 1;
                if ticks_since_coarse == 4 || st.t >= cfg.horizon {
                    ticks_since_coarse = 0;
                    true
                } else {
                    false
                }
            };
            if coarse_event {
                observe(&mut coarse, &st, is_jump, self);
            }
        }

        let (fk, ft, fx, fs, fterm, fpen) = fine.done.unwrap();
        let (_, _, _, _, cterm, cpen) = coarse.done.unwrap();
        let running = coarse.running.value() - fine.running.value();
        let terminal = cterm - fterm;
        let penalty = cpen - fpen;
        PathOutcome {
            payoff: running + terminal - penalty,
            stop_kind: fk,
            tau: ft,
            final_x: fx,
            final_s: fs,
            running,
            terminal,
            penalty,
        }
    }

    fn check_sim(&self, curve: &StrategyCurve, cfg: &SimConfig) -> Result<()> {
        self.check_curve(curve)?;
        if self.bundle.q * cfg.horizon < MIN_DISCOUNTED_HORIZON {
            return Err(Error::InvalidSimConfig(format!(
                "horizon {} leaves discount mass q*h = {} < {MIN_DISCOUNTED_HORIZON}; \
                 truncation bias would rival the standard error",
                cfg.horizon,
                self.bundle.q * cfg.horizon
            )));
        }
        if cfg.antithetic && !cfg.n_paths.is_multiple_of(2) {
            return Err(Error::InvalidSimConfig(format!(
                "antithetic pairing needs an even path count, got {}",
                cfg.n_paths
            )));
        }
        Ok(())
    }
}

/// Exponential draw with the given rate, safe at the grid edge.
#[inline]
fn exp_draw(rng: &mut ChaCha8Rng, rate: f64) -> f64 {
    let u: f64 = rng.random();
    -(1.0 - u).ln() / rate
}

fn outcome(
    st: &PathState,
    stop_kind: StopKind,
    running: f64,
    terminal: f64,
    penalty: f64,
) -> PathOutcome {
    PathOutcome {
        payoff: running + terminal - penalty,
        stop_kind,
        tau: st.t,
        final_x: st.x,
        final_s: st.s,
        running,
        terminal,
        penalty,
    }
}

/// Deterministic reduction: compensated sums in path order, standard error
/// over pair means when antithetic.
fn reduce(outcomes: &[PathOutcome], antithetic: bool) -> McEstimate {
    let n = outcomes.len();
    let mut sums = [CompensatedSum::new(); 5];
    let (mut n_stopped, mut n_ruined, mut n_truncated) = (0usize, 0usize, 0usize);
    for o in outcomes {
        sums[0].add(o.payoff);
        sums[1].add(o.running);
        sums[2].add(o.terminal);
        sums[3].add(o.penalty);
        sums[4].add(o.tau);
        match o.stop_kind {
            StopKind::Stopped => n_stopped += 1,
            StopKind::Ruined => n_ruined += 1,
            StopKind::Truncated => n_truncated += 1,
        }
    }
    let mean = sums[0].value() / n as f64;
    let se = if antithetic {
        let k = n / 2;
        let mut var = CompensatedSum::new();
        for pair in outcomes.chunks_exact(2) {
            let pm = 0.5 * (pair[0].payoff + pair[1].payoff);
            var.add((pm - mean) * (pm - mean));
        }
        (var.value() / (k as f64 * (k as f64 - 1.0))).sqrt()
    } else {
        let mut var = CompensatedSum::new();
        for o in outcomes {
            var.add((o.payoff - mean) * (o.payoff - mean));
        }
        (var.value() / (n as f64 * (n as f64 - 1.0))).sqrt()
    };
    McEstimate {
        mean,
        se,
        n_paths: n,
        n_stopped,
        n_ruined,
        n_truncated,
        mean_running: sums[1].value() / n as f64,
        mean_terminal: sums[2].value() / n as f64,
        mean_penalty: sums[3].value() / n as f64,
        mean_tau: sums[4].value() / n as f64,
    }
}
