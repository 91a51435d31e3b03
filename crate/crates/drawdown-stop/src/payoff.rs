//! Payoff specifications and the resolvent transform that folds the running
//! reward into terminal ones.
//!
//! The control problem pays a running reward `f(X_t)` until the agent stops
//! or is ruined, a lump reward `g(X_tau)` on voluntary stopping, and a lump
//! penalty `k(X_T)` on ruin. All three are finite sums of exponentials
//! `c * e^{gamma x}`, which keeps every transform in closed form: the
//! `q`-resolvent of a term is
//!
//! ```text
//! fbar(x) = c * e^{gamma x} / (q - psi(gamma)),     psi(gamma) < q,
//! ```
//!
//! and the problem is equivalent to one with no running reward, lump reward
//! `g - fbar` and lump penalty `k + fbar`. Those two bundles are what the
//! excursion solver consumes.

use serde::{Deserialize, Serialize};

use crate::model::LevyModel;
use crate::{Error, Result};

/// A single exponential term `coef * e^{gamma x}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpTerm {
    /// Multiplicative coefficient.
    pub coef: f64,
    /// Exponent slope.
    pub gamma: f64,
}

/// Which slot of the payoff triple a function occupies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PayoffRole {
    /// Reward rate accrued while the position is open.
    Running,
    /// Lump reward collected on voluntary stopping.
    StopReward,
    /// Lump penalty paid on ruin.
    RuinPenalty,
}

/// A payoff function given as a finite sum of exponential terms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct ExpPayoff {
    /// Terms sorted by ascending exponent.
    pub terms: Vec<ExpTerm>,
}

impl ExpPayoff {
    /// Payoff from a list of terms (sorted and zero-coefficient terms
    /// dropped).
    pub fn new(terms: Vec<ExpTerm>) -> Self {
        let mut p = Self { terms };
        p.normalise();
        p
    }

    /// The single-term payoff `coef * e^{gamma x}`.
    pub fn single(coef: f64, gamma: f64) -> Self {
        Self::new(vec![ExpTerm { coef, gamma }])
    }

    /// The identically-zero payoff.
    pub fn zero() -> Self {
        Self { terms: Vec::new() }
    }

    /// Check that all terms are finite.
    pub fn validate(&self) -> Result<()> {
        for t in &self.terms {
            if !(t.coef.is_finite() && t.gamma.is_finite()) {
                return Err(Error::InvalidPayoff(format!(
                    "non-finite term {} * e^({} x)",
                    t.coef, t.gamma
                )));
            }
        }
        Ok(())
    }

    /// Evaluate the payoff at `x`.
    pub fn eval(&self, x: f64) -> f64 {
        self.terms.iter().map(|t| t.coef * (t.gamma * x).exp()).sum()
    }

    /// Sort by exponent and merge terms whose exponents coincide.
    fn normalise(&mut self) {
        self.terms
            .sort_by(|a, b| a.gamma.partial_cmp(&b.gamma).unwrap());
        let mut merged: Vec<ExpTerm> = Vec::with_capacity(self.terms.len());
        for t in self.terms.drain(..) {
            match merged.last_mut() {
                Some(last) if (last.gamma - t.gamma).abs() <= 1e-12 * (1.0 + t.gamma.abs()) => {
                    last.coef += t.coef;
                }
                _ => merged.push(t),
            }
        }
        merged.retain(|t| t.coef != 0.0);
        self.terms = merged;
    }

    /// Sum of `self` and `sign * other`.
    fn combine(&self, other: &Self, sign: f64) -> Self {
        let mut terms = self.terms.clone();
        terms.extend(other.terms.iter().map(|t| ExpTerm {
            coef: sign * t.coef,
            gamma: t.gamma,
        }));
        Self::new(terms)
    }

    /// The q-potential: expected discounted lifetime integral of the payoff
    /// along `model`, term-wise `c/(q - psi(gamma)) * e^{gamma x}`. Exact
    /// and linear in the terms. Fails for any term with `psi(gamma) >= q`,
    /// where the integral diverges.
    pub fn potential(&self, model: &LevyModel, q: f64) -> Result<Self> {
        self.validate()?;
        let mut terms = Vec::with_capacity(self.terms.len());
        for t in &self.terms {
            let psi = model.laplace_exponent(t.gamma);
            if !model.check_potential_condition(t.gamma, q) {
                return Err(Error::PotentialDiverges {
                    gamma: t.gamma,
                    psi,
                    q,
                });
            }
            terms.push(ExpTerm {
                coef: t.coef / (q - psi),
                gamma: t.gamma,
            });
        }
        Ok(Self::new(terms))
    }
}

/// The payoff triple together with its resolvent-transformed companions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PayoffBundle {
    /// Discount rate of the control problem.
    pub q: f64,
    /// Running reward rate `f`.
    pub running: ExpPayoff,
    /// Stop reward `g`.
    pub stop_reward: ExpPayoff,
    /// Ruin penalty `k`.
    pub ruin_penalty: ExpPayoff,
    /// Resolvent `fbar` of the running reward.
    pub resolvent: ExpPayoff,
    /// Effective stop reward `g - fbar`.
    pub net_reward: ExpPayoff,
    /// Effective ruin penalty `k + fbar`.
    pub net_penalty: ExpPayoff,
}

impl PayoffBundle {
    /// Build the bundle for `model` at discount rate `q`, checking the
    /// potential condition `psi(gamma) < q` for every running-reward term.
    pub fn new(
        model: &LevyModel,
        q: f64,
        running: ExpPayoff,
        stop_reward: ExpPayoff,
        ruin_penalty: ExpPayoff,
    ) -> Result<Self> {
        model.validate()?;
        if !(q.is_finite() && q > 0.0) {
            return Err(Error::InvalidPayoff(format!(
                "discount rate must be positive, got {q}"
            )));
        }
        stop_reward.validate()?;
        ruin_penalty.validate()?;
        let resolvent = running.potential(model, q)?;
        let net_reward = stop_reward.combine(&resolvent, -1.0);
        let net_penalty = ruin_penalty.combine(&resolvent, 1.0);
        Ok(Self {
            q,
            running,
            stop_reward,
            ruin_penalty,
            resolvent,
            net_reward,
            net_penalty,
        })
    }

    /// The raw payoff in a given role.
    pub fn payoff(&self, role: PayoffRole) -> &ExpPayoff {
        match role {
            PayoffRole::Running => &self.running,
            PayoffRole::StopReward => &self.stop_reward,
            PayoffRole::RuinPenalty => &self.ruin_penalty,
        }
    }
}
