//! The `q`-scale function `W` of the model and the fluctuation identities
//! built on it.
//!
//! Because the Laplace exponent here is rational, `W` is a finite mixture of
//! exponentials: with `theta_i` the real roots of `psi = q`,
//!
//! ```text
//! W(x) = sum_i e^{theta_i x} / psi'(theta_i)     for x >= 0,
//! W(x) = 0                                       for x < 0,
//! ```
//!
//! and `W(0) = 0`, `W'(0+) = 2/sigma^2` whenever a Brownian component is
//! present. Two-sided exit probabilities, the killed drawdown ("excursion")
//! intensity `W'/W` and the companion function `Z` all come straight from
//! this mixture.

use serde::{Deserialize, Serialize};

use crate::model::{LevyModel, RootSet};
use crate::numerics::{exp_integral, CompensatedSum};
use crate::Result;

/// One exponential component `weight * e^{theta x}` of the scale function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleTerm {
    /// Exponent: a root of `psi = q`.
    pub theta: f64,
    /// Mixture weight `1/psi'(theta)`.
    pub weight: f64,
}

/// The `q`-scale function of a [`LevyModel`] as an exponential mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleFunction {
    /// Mixture terms sorted by ascending exponent, so compensated summation
    /// sees the dominant (largest-`theta`) term last.
    pub terms: Vec<ScaleTerm>,
    /// Discount rate `q` the scale function belongs to.
    pub q: f64,
    /// The positive root `Phi(q)`, cached for tilting and exit identities.
    pub phi: f64,
}

impl ScaleFunction {
    /// Build the scale function for `model` at discount rate `q > 0`.
    pub fn new(model: &LevyModel, q: f64) -> Result<Self> {
        let roots = model.solve_roots(q)?;
        Ok(Self::from_roots(&roots))
    }

    /// Build from an already-solved [`RootSet`].
    pub fn from_roots(roots: &RootSet) -> Self {
        let phi = roots.phi();
        let mut terms: Vec<ScaleTerm> = roots
            .roots
            .iter()
            .zip(&roots.derivs)
            .map(|(&theta, &d)| ScaleTerm {
                theta,
                weight: 1.0 / d,
            })
            .collect();
        terms.sort_by(|a, b| a.theta.partial_cmp(&b.theta).unwrap());
        Self {
            terms,
            q: roots.q,
            phi,
        }
    }

    /// `sum_i theta_i^pow * weight_i * e^{theta_i x}`, the mixture and its
    /// derivatives in one place.
    #[inline]
    fn mixture(&self, x: f64, pow: i32) -> f64 {
        let mut s = CompensatedSum::new();
        for t in &self.terms {
            s.add(t.theta.powi(pow) * t.weight * (t.theta * x).exp());
        }
        s.value()
    }

    /// `W(x)`; zero for negative arguments.
    #[inline]
    pub fn w(&self, x: f64) -> f64 {
        if x < 0.0 {
            0.0
        } else {
            self.mixture(x, 0)
        }
    }

    /// `W'(x)` on `x >= 0` (right derivative at zero); zero below.
    #[inline]
    pub fn w_prime(&self, x: f64) -> f64 {
        if x < 0.0 {
            0.0
        } else {
            self.mixture(x, 1)
        }
    }

    /// `W''(x)` on `x >= 0` (right limit at zero); zero below.
    #[inline]
    pub fn w_second(&self, x: f64) -> f64 {
        if x < 0.0 {
            0.0
        } else {
            self.mixture(x, 2)
        }
    }

    /// `Z(x) = 1 + q * integral_0^x W(y) dy`, evaluated in closed form. The
    /// undiscounted case collapses to `Z == 1`, and a zero root (which only
    /// happens at `q = 0`) would integrate to a plain linear term.
    pub fn z_q(&self, x: f64) -> f64 {
        if x <= 0.0 || self.q == 0.0 {
            return 1.0;
        }
        let mut s = CompensatedSum::new();
        for t in &self.terms {
            s.add(t.weight * exp_integral(t.theta, 0.0, x));
        }
        1.0 + self.q * s.value()
    }

    /// Exponentially tilted scale function `e^{-Phi(q) x} W(x)`. Computed in
    /// tilted exponent space so it stays finite for arbitrarily large `x`
    /// (it increases to `1/psi'(Phi(q))`).
    pub fn tilted_w(&self, x: f64) -> f64 {
        if x < 0.0 {
            return 0.0;
        }
        let mut s = CompensatedSum::new();
        for t in &self.terms {
            s.add(t.weight * ((t.theta - self.phi) * x).exp());
        }
        s.value()
    }

    /// Excursion intensity `nu(z) = W'(z)/W(z)` for `z > 0`: the rate (in
    /// local time at the running maximum) of drawdown excursions deep enough
    /// to reach `z` before being discounted away. Diverges like `1/z` as
    /// `z -> 0+`.
    pub fn excursion_intensity(&self, z: f64) -> f64 {
        assert!(z > 0.0, "excursion_intensity requires z > 0, got {z}");
        self.w_prime(z) / self.w(z)
    }

    /// Discounted two-sided exit upward: `E_x[e^{-q T_a} ; T_a < T_0]`
    /// equals `W(x)/W(a)` for `0 <= x <= a`, where `T_a` and `T_0` are the
    /// first hitting times of `a` (from below) and `0` (from above).
    pub fn exit_up(&self, x: f64, a: f64) -> f64 {
        assert!(a > 0.0 && x <= a, "exit_up requires 0 < a and x <= a");
        self.w(x) / self.w(a)
    }

    /// Discounted ruin transform `E_x[e^{-q T_0} ; T_0 < infinity]` for the
    /// level-zero first passage from `x >= 0`, equal to
    /// `Z(x) - q W(x)/Phi(q)`.
    ///
    /// Evaluated with the two sums grouped per exponent: the `Phi(q)` term
    /// of `Z` and of `q W/Phi` cancel exactly, leaving `-q w_Phi/Phi` plus
    /// decaying exponentials. The naive difference loses all precision once
    /// `Phi(q) x` is large (two ~`e^{Phi x}` quantities subtracted).
    pub fn exit_down_laplace(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 1.0;
        }
        let mut s = CompensatedSum::new();
        for t in &self.terms {
            if t.theta == self.phi {
                s.add(-t.weight / self.phi);
            } else {
                s.add(t.weight * (exp_integral(t.theta, 0.0, x) - (t.theta * x).exp() / self.phi));
            }
        }
        1.0 + self.q * s.value()
    }
}
