//! Run configuration: one JSON document describing the model, payoffs, and
//! every command's parameters. Defaults reproduce the jump-diffusion
//! example shipped with the library.

use anyhow::{bail, Context, Result};
use drawdown_stop::{ExcursionSolver, ExpPayoff, ExpTerm, LevyModel, PayoffBundle, SimConfig};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// One exponential payoff term `coef * e^{gamma x}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermConfig {
    pub coef: f64,
    pub gamma: f64,
}

/// Exponential jump component of the driving process.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JumpConfig {
    /// Poisson arrival intensity of downward jumps.
    pub intensity: f64,
    /// Rate of the exponential jump height (mean height `1/rate`).
    pub rate: f64,
}

/// Driving process parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub mu: f64,
    pub sigma: f64,
    /// Absent for a pure Brownian model.
    pub jumps: Option<JumpConfig>,
}

/// Payoff terms per role.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PayoffConfig {
    /// Running reward `f`.
    pub running: Vec<TermConfig>,
    /// Stop reward `g`.
    pub reward: Vec<TermConfig>,
    /// Ruin penalty `k`.
    pub penalty: Vec<TermConfig>,
}

impl Default for PayoffConfig {
    fn default() -> Self {
        Self {
            running: vec![TermConfig {
                coef: 1.0,
                gamma: 0.5,
            }],
            reward: vec![TermConfig {
                coef: 1.0,
                gamma: 1.0,
            }],
            penalty: Vec::new(),
        }
    }
}

/// Grid for the threshold-curve solve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolveConfig {
    pub s_min: f64,
    pub s_max: f64,
    /// Number of maximum-level grid points.
    pub n_grid: usize,
    /// Resolution of exported objective samples (plot data).
    pub z_grid: usize,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            s_min: 4.0,
            s_max: 5.5,
            n_grid: 301,
            z_grid: 512,
        }
    }
}

/// Grid for the value-surface export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SurfaceConfig {
    /// Maximum levels at which rows are cut.
    pub s_values: Vec<f64>,
    /// Positions per row.
    pub n_x: usize,
    /// How far the rows extend below the ruin boundary `x = s - b`.
    pub depth_below: f64,
}

impl Default for SurfaceConfig {
    fn default() -> Self {
        Self {
            s_values: vec![4.6, 5.0, 5.4],
            n_x: 121,
            depth_below: 0.25,
        }
    }
}

/// Simulation parameters and closed-form-vs-simulation probes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimSection {
    pub dt: f64,
    pub horizon: f64,
    pub n_paths: usize,
    pub seed: u64,
    pub antithetic: bool,
    /// `(x, s)` starting points compared in `simulate`.
    pub probes: Vec<[f64; 2]>,
}

impl Default for SimSection {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            horizon: 200.0,
            n_paths: 20_000,
            seed: 42,
            antithetic: true,
            probes: vec![[5.0, 5.0], [4.5, 5.0]],
        }
    }
}

/// The whole run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub model: ModelConfig,
    /// Discount rate.
    pub q: f64,
    /// Ruin threshold on the drawdown.
    pub b: f64,
    pub payoff: PayoffConfig,
    pub solve: SolveConfig,
    pub surface: SurfaceConfig,
    pub sim: SimSection,
    /// Debt-reduction factor mapping the ruin threshold to an effective
    /// boundary; `None` disables the deleveraging view.
    pub deleverage_alpha: Option<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig {
                mu: 0.25,
                sigma: 0.1,
                jumps: Some(JumpConfig {
                    intensity: 2.0,
                    rate: 10.0,
                }),
            },
            q: 0.1,
            b: 1.0,
            payoff: PayoffConfig::default(),
            solve: SolveConfig::default(),
            surface: SurfaceConfig::default(),
            sim: SimSection::default(),
            deleverage_alpha: None,
        }
    }
}

impl RunConfig {
    /// Read and validate a configuration file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let cfg: RunConfig = serde_json::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Structural checks beyond what the schema can express.
    pub fn validate(&self) -> Result<()> {
        if let Some(alpha) = self.deleverage_alpha {
            if !(0.0 < alpha && alpha <= 1.0) {
                bail!("deleverage_alpha must lie in (0, 1], got {alpha}");
            }
            if (1.0 - (-self.b).exp()) / alpha >= 1.0 {
                bail!(
                    "deleverage_alpha {alpha} leaves no effective boundary for b = {}",
                    self.b
                );
            }
        }
        if self.solve.s_min > self.solve.s_max {
            bail!(
                "solve range is inverted: [{}, {}]",
                self.solve.s_min,
                self.solve.s_max
            );
        }
        Ok(())
    }

    /// Serialize with stable formatting for `--dump-config`.
    pub fn to_pretty_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialization cannot fail")
    }

    fn levy_model(&self) -> LevyModel {
        match self.model.jumps {
            None => LevyModel::brownian(self.model.mu, self.model.sigma),
            Some(j) => LevyModel::with_exponential_jumps(
                self.model.mu,
                self.model.sigma,
                j.intensity,
                j.rate,
            ),
        }
    }

    fn payoff(terms: &[TermConfig]) -> ExpPayoff {
        ExpPayoff::new(
            terms
                .iter()
                .map(|t| ExpTerm {
                    coef: t.coef,
                    gamma: t.gamma,
                })
                .collect(),
        )
    }

    /// Build the solver this configuration describes.
    pub fn build_solver(&self) -> Result<ExcursionSolver> {
        let model = self.levy_model();
        let bundle = PayoffBundle::new(
            &model,
            self.q,
            Self::payoff(&self.payoff.running),
            Self::payoff(&self.payoff.reward),
            Self::payoff(&self.payoff.penalty),
        )
        .context("building the payoff bundle")?;
        ExcursionSolver::new(model, bundle, self.b).context("building the solver")
    }

    /// Simulation parameters as the library type.
    pub fn sim_config(&self) -> Result<SimConfig> {
        SimConfig::new(
            self.sim.dt,
            self.sim.horizon,
            self.sim.n_paths,
            self.sim.seed,
            self.sim.antithetic,
        )
        .context("simulation parameters")
    }
}

/// Effective absorption boundary under deleveraging: reducing the position
/// by a factor `alpha` at the threshold is equivalent to ruin at drawdown
/// `-ln(1 - (1 - e^{-b}) / alpha)`.
pub fn effective_boundary(b: f64, alpha: f64) -> Result<f64> {
    if !(b > 0.0 && b.is_finite()) {
        bail!("threshold b must be positive and finite, got {b}");
    }
    if !(0.0 < alpha && alpha <= 1.0) {
        bail!("alpha must lie in (0, 1], got {alpha}");
    }
    if alpha == 1.0 {
        // -ln(1 - (1 - e^{-b})) collapses to b; return it without the
        // round trip through the logarithm.
        return Ok(b);
    }
    let inner = 1.0 - (1.0 - (-b).exp()) / alpha;
    if inner <= 0.0 {
        bail!("alpha {alpha} is too small for threshold {b}: no effective boundary");
    }
    Ok(-inner.ln())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_json() {
        let cfg = RunConfig::default();
        let text = cfg.to_pretty_json();
        let back: RunConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn partial_configs_inherit_defaults() {
        let cfg: RunConfig = serde_json::from_str(r#"{"q": 0.2}"#).unwrap();
        assert_eq!(cfg.q, 0.2);
        assert_eq!(cfg.b, 1.0);
        assert_eq!(cfg.sim.n_paths, 20_000);
        let err = serde_json::from_str::<RunConfig>(r#"{"qq": 0.2}"#);
        assert!(err.is_err(), "unknown fields must be rejected");
    }

    #[test]
    fn default_config_builds_the_jump_solver() {
        let sv = RunConfig::default().build_solver().unwrap();
        assert!(sv.model.jumps.params().is_some());
        assert_eq!(sv.b, 1.0);
    }

    #[test]
    fn effective_boundary_limits() {
        assert_eq!(effective_boundary(1.0, 1.0).unwrap(), 1.0);
        let widened = effective_boundary(1.0, 0.8).unwrap();
        assert!(
            (widened - 1.5614).abs() < 5e-4,
            "effective boundary {widened} off target 1.5614"
        );
        assert!(widened > 1.0, "deleveraging must widen the boundary");
        assert!(effective_boundary(1.0, 0.6).is_err());
        assert!(effective_boundary(1.0, 0.0).is_err());
        assert!(effective_boundary(1.0, 1.5).is_err());
        assert!(effective_boundary(-1.0, 0.9).is_err());
    }

    #[test]
    fn deleveraging_validation() {
        let mut cfg = RunConfig {
            deleverage_alpha: Some(0.8),
            ..RunConfig::default()
        };
        assert!(cfg.validate().is_ok());
        cfg.deleverage_alpha = Some(0.3);
        assert!(cfg.validate().is_err());
    }
}
