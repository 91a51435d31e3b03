//! The driving process: a spectrally negative Lévy model with a Brownian
//! component and, optionally, compound-Poisson exponentially distributed
//! downward jumps.
//!
//! The Laplace exponent is
//!
//! ```text
//! psi(lambda) = mu*lambda + sigma^2*lambda^2/2 - a*lambda/(rho + lambda)
//! ```
//!
//! with jump intensity `a` and jump-size rate `rho` (mean jump `1/rho`).
//! Everything downstream — scale functions, excursion intensities, the
//! optimal stopping solver — is built from the real solutions of
//! `psi(theta) = q`.

use serde::{Deserialize, Serialize};

use crate::numerics::{cubic_roots_monic, polish_root, quadratic_roots};
use crate::{Error, Result};

/// Minimum pairwise separation between roots of `psi = q`; closer roots make
/// the partial-fraction scale function ill-conditioned and are rejected.
pub const MIN_ROOT_GAP: f64 = 1e-8;

/// Jump component of the model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Jumps {
    /// Pure diffusion: no jumps.
    None,
    /// Downward jumps arriving at Poisson rate `intensity` with
    /// `Exp(rate)`-distributed sizes (mean size `1/rate`).
    Exponential { intensity: f64, rate: f64 },
}

impl Jumps {
    /// `(intensity, rate)` if jumps are present with positive intensity.
    pub fn params(&self) -> Option<(f64, f64)> {
        match *self {
            Jumps::None => None,
            Jumps::Exponential { intensity, rate } => {
                if intensity > 0.0 {
                    Some((intensity, rate))
                } else {
                    None
                }
            }
        }
    }
}

/// Spectrally negative Lévy process `X` with drift `mu`, volatility `sigma`
/// and the jump component in `jumps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevyModel {
    /// Drift coefficient.
    pub mu: f64,
    /// Brownian volatility; must be strictly positive.
    pub sigma: f64,
    /// Jump component.
    pub jumps: Jumps,
}

/// Real solutions of `psi(theta) = q` together with `psi'` at each, the
/// raw material for the scale function's exponential mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RootSet {
    /// Roots sorted descending; `roots[0]` is the positive root `Phi(q)`.
    pub roots: Vec<f64>,
    /// `psi'(theta)` for each root, in the same order.
    pub derivs: Vec<f64>,
    /// Discount rate the equation was solved for.
    pub q: f64,
}

impl RootSet {
    /// The unique positive root `Phi(q)`.
    pub fn phi(&self) -> f64 {
        self.roots[0]
    }
}

impl LevyModel {
    /// Pure-diffusion model.
    pub fn brownian(mu: f64, sigma: f64) -> Self {
        Self {
            mu,
            sigma,
            jumps: Jumps::None,
        }
    }

    /// Model with exponential downward jumps.
    pub fn with_exponential_jumps(mu: f64, sigma: f64, intensity: f64, rate: f64) -> Self {
        Self {
            mu,
            sigma,
            jumps: Jumps::Exponential { intensity, rate },
        }
    }

    /// Check parameter sanity; every constructor path should funnel through
    /// this before the model is used.
    pub fn validate(&self) -> Result<()> {
        if !self.mu.is_finite() {
            return Err(Error::InvalidModel(format!("mu must be finite, got {}", self.mu)));
        }
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return Err(Error::InvalidModel(format!(
                "sigma must be strictly positive, got {}",
                self.sigma
            )));
        }
        if let Jumps::Exponential { intensity, rate } = self.jumps {
            if !(intensity.is_finite() && intensity >= 0.0) {
                return Err(Error::InvalidModel(format!(
                    "jump intensity must be non-negative, got {intensity}"
                )));
            }
            if !(rate.is_finite() && rate > 0.0) {
                return Err(Error::InvalidModel(format!(
                    "jump rate must be strictly positive, got {rate}"
                )));
            }
        }
        Ok(())
    }

    /// Laplace exponent `psi(lambda)`; for the jump part the rational form
    /// extends analytically below the pole at `-rate`, which is exactly what
    /// the smallest root of `psi = q` lives on.
    pub fn laplace_exponent(&self, lambda: f64) -> f64 {
        let diffusion = self.mu * lambda + 0.5 * self.sigma * self.sigma * lambda * lambda;
        match self.jumps.params() {
            None => diffusion,
            Some((a, rho)) => diffusion - a * lambda / (rho + lambda),
        }
    }

    /// First (`order == 1`) or second (`order == 2`) derivative of `psi`.
    pub fn laplace_exponent_deriv(&self, lambda: f64, order: u8) -> f64 {
        let s2 = self.sigma * self.sigma;
        match order {
            1 => {
                let diffusion = self.mu + s2 * lambda;
                match self.jumps.params() {
                    None => diffusion,
                    Some((a, rho)) => {
                        let d = rho + lambda;
                        diffusion - a * rho / (d * d)
                    }
                }
            }
            2 => match self.jumps.params() {
                None => s2,
                Some((a, rho)) => {
                    let d = rho + lambda;
                    s2 + 2.0 * a * rho / (d * d * d)
                }
            },
            _ => panic!("laplace_exponent_deriv supports orders 1 and 2, got {order}"),
        }
    }

    /// Whether the `q`-potential of `e^{gamma x}` is finite, i.e.
    /// `psi(gamma) < q` strictly. Payoff exponents must satisfy this for the
    /// resolvent-transformed payoff to exist; note the comparison is strict,
    /// so `gamma = Phi(q)` itself fails.
    pub fn check_potential_condition(&self, gamma: f64, q: f64) -> bool {
        self.laplace_exponent(gamma) < q
    }

    /// All real roots of `psi(theta) = q`, sorted descending.
    ///
    /// Without jumps this is a quadratic with one positive and one negative
    /// root. With jumps, clearing the pole at `-rho` gives the monic cubic
    ///
    /// ```text
    /// theta^3 + (2 mu/sigma^2 + rho) theta^2
    ///         + 2 (mu rho - a - q)/sigma^2 theta - 2 q rho / sigma^2 = 0
    /// ```
    ///
    /// which for `q > 0` has three distinct real roots interlacing as
    /// `Phi(q) > 0 > alpha > -rho > beta`. Closed forms are polished with a
    /// bracketed Newton step and the spacing is checked. `q = 0` is accepted
    /// only for models drifting upward (`psi'(0+) > 0`); then `Phi(0) = 0` is
    /// itself the largest root and the remaining roots are strictly negative.
    pub fn solve_roots(&self, q: f64) -> Result<RootSet> {
        self.validate()?;
        if !(q.is_finite() && q >= 0.0) {
            return Err(Error::Domain(format!(
                "root solving requires a discount rate q >= 0, got {q}"
            )));
        }
        if q == 0.0 {
            let drift = self.laplace_exponent_deriv(0.0, 1);
            if drift <= 0.0 || drift.is_nan() {
                return Err(Error::Domain(format!(
                    "q = 0 requires upward drift psi'(0+) > 0, got {drift}"
                )));
            }
        }
        let s2 = self.sigma * self.sigma;
        let roots = match self.jumps.params() {
            None => {
                if q == 0.0 {
                    // psi(theta) = 0 factors as theta (sigma^2 theta / 2 + mu).
                    vec![0.0, -2.0 * self.mu / s2]
                } else {
                    let rs = quadratic_roots(0.5 * s2, self.mu, -q).ok_or_else(|| {
                        Error::Numerics("quadratic psi = q discriminant negative".into())
                    })?;
                    rs.to_vec()
                }
            }
            Some((a, rho)) => {
                let p = 2.0 * self.mu / s2 + rho;
                let lin = 2.0 * (self.mu * rho - a - q) / s2;
                let con = -2.0 * q * rho / s2;
                if q == 0.0 {
                    // theta = 0 solves the cubic exactly; the other roots come
                    // from the residual quadratic theta^2 + p theta + lin = 0.
                    let rs = quadratic_roots(1.0, p, lin).ok_or_else(|| {
                        Error::Numerics("residual quadratic of psi = 0 has no real roots".into())
                    })?;
                    vec![0.0, rs[0], rs[1]]
                } else {
                    let rs = cubic_roots_monic(p, lin, con);
                    if rs.len() != 3 {
                        return Err(Error::Numerics(format!(
                            "expected three real roots of psi = q, found {}",
                            rs.len()
                        )));
                    }
                    let f = |x: f64| ((x + p) * x + lin) * x + con;
                    let df = |x: f64| (3.0 * x + 2.0 * p) * x + lin;
                    rs.into_iter().map(|r| polish_root(f, df, r)).collect()
                }
            }
        };
        for w in roots.windows(2) {
            if (w[0] - w[1]).abs() < MIN_ROOT_GAP {
                return Err(Error::Numerics(format!(
                    "roots of psi = q nearly coincide: {} and {}",
                    w[0], w[1]
                )));
            }
        }
        if roots[0] < 0.0 || (q > 0.0 && roots[0] == 0.0) {
            return Err(Error::Numerics(format!(
                "largest root of psi = q should be Phi(q) >= 0, got {}",
                roots[0]
            )));
        }
        for &r in &roots {
            let resid = self.laplace_exponent(r) - q;
            if resid.abs() > 1e-6 * q.max(1.0) {
                return Err(Error::Numerics(format!(
                    "root {r} of psi = q has residual {resid:e}"
                )));
            }
        }
        let derivs = roots
            .iter()
            .map(|&r| self.laplace_exponent_deriv(r, 1))
            .collect();
        Ok(RootSet { roots, derivs, q })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brownian_example() -> LevyModel {
        LevyModel::brownian(0.05, 0.1)
    }

    fn jump_example() -> LevyModel {
        LevyModel::with_exponential_jumps(0.25, 0.1, 2.0, 10.0)
    }

    #[test]
    fn validate_rejects_bad_parameters() {
        assert!(LevyModel::brownian(0.05, 0.0).validate().is_err());
        assert!(LevyModel::brownian(0.05, -1.0).validate().is_err());
        assert!(LevyModel::brownian(f64::NAN, 0.1).validate().is_err());
        assert!(LevyModel::with_exponential_jumps(0.25, 0.1, -1.0, 10.0)
            .validate()
            .is_err());
        assert!(LevyModel::with_exponential_jumps(0.25, 0.1, 2.0, 0.0)
            .validate()
            .is_err());
        assert!(jump_example().validate().is_ok());
    }

    #[test]
    fn laplace_exponent_pinned_values() {
        // mu + sigma^2/2 at lambda = 1 for the diffusion model.
        assert!((brownian_example().laplace_exponent(1.0) - 0.055).abs() < 1e-15);
        // Jump model at lambda = 1/2: 0.125 + 0.00125 - 1/10.5.
        let psi_half = jump_example().laplace_exponent(0.5);
        assert!(
            (psi_half - 0.031_011_904_761_904_77).abs() < 1e-15,
            "psi(1/2) = {psi_half}"
        );
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let m = jump_example();
        let h = 1e-6;
        for &lam in &[0.3, 1.0, 2.5, -0.5] {
            let fd1 = (m.laplace_exponent(lam + h) - m.laplace_exponent(lam - h)) / (2.0 * h);
            let fd2 = (m.laplace_exponent(lam + h) - 2.0 * m.laplace_exponent(lam)
                + m.laplace_exponent(lam - h))
                / (h * h);
            assert!((m.laplace_exponent_deriv(lam, 1) - fd1).abs() < 1e-6);
            assert!((m.laplace_exponent_deriv(lam, 2) - fd2).abs() < 1e-3);
        }
    }

    #[test]
    fn brownian_roots_are_exact() {
        let rs = brownian_example().solve_roots(0.1).unwrap();
        assert_eq!(rs.roots.len(), 2);
        // (-mu ± sqrt(mu^2 + 2 sigma^2 q)) / sigma^2 with the numbers above.
        assert!((rs.phi() - 1.708_203_932_499_37).abs() < 1e-12);
        assert!((rs.roots[1] + 11.708_203_932_499_4).abs() < 1e-12);
        assert!((rs.derivs[0] - 0.067_082_039_324_993_7).abs() < 1e-14);
    }

    #[test]
    fn jump_roots_interlace_with_pole() {
        let m = jump_example();
        let rs = m.solve_roots(0.1).unwrap();
        assert_eq!(rs.roots.len(), 3);
        let (phi, alpha, beta) = (rs.roots[0], rs.roots[1], rs.roots[2]);
        assert!((phi - 1.268_218_733_040_34).abs() < 1e-10, "phi = {phi}");
        assert!((alpha + 2.692_256_279_391_83).abs() < 1e-10, "alpha = {alpha}");
        assert!((beta + 58.575_962_453_648_5).abs() < 1e-9, "beta = {beta}");
        // Ordering around the jump-rate pole: Phi > 0 > alpha > -rho > beta.
        assert!(phi > 0.0 && alpha < 0.0 && alpha > -10.0 && beta < -10.0);
        for (&r, &d) in rs.roots.iter().zip(&rs.derivs) {
            assert!((m.laplace_exponent(r) - 0.1).abs() < 1e-10);
            assert!((m.laplace_exponent_deriv(r, 1) - d).abs() == 0.0);
        }
    }

    #[test]
    fn potential_condition_is_strict() {
        let m = jump_example();
        assert!(m.check_potential_condition(0.5, 0.1));
        assert!(m.check_potential_condition(1.0, 0.1));
        let phi = m.solve_roots(0.1).unwrap().phi();
        // psi(Phi(q)) = q exactly, so the strict inequality fails there...
        assert!(!m.check_potential_condition(phi, 0.1));
        // ...and a value rounded up past Phi(q) fails too.
        assert!(!m.check_potential_condition(1.268_219, 0.1));
        assert!(brownian_example().check_potential_condition(1.0, 0.1));
    }

    #[test]
    fn near_degenerate_roots_are_rejected() {
        // A vanishing discount rate drives both quadratic roots to zero,
        // collapsing the gap below the tolerance.
        let err = LevyModel::brownian(0.0, 1.0).solve_roots(1e-18).unwrap_err();
        assert!(matches!(err, Error::Numerics(_)), "got {err:?}");
    }

    #[test]
    fn zero_discount_needs_upward_drift() {
        // Jump example drifts up: psi'(0+) = 0.25 - 2/10 = 0.05 > 0, so q = 0
        // is admissible with Phi(0) = 0 and the residual quadratic
        // theta^2 + 60 theta + 100 giving -30 +- sqrt(800).
        let rs = jump_example().solve_roots(0.0).unwrap();
        assert_eq!(rs.phi(), 0.0);
        assert_eq!(rs.roots.len(), 3);
        assert!((rs.roots[1] + 1.715_728_752_538_098_4).abs() < 1e-10);
        assert!((rs.roots[2] + 58.284_271_247_461_9).abs() < 1e-9);
        let bm = brownian_example().solve_roots(0.0).unwrap();
        assert_eq!(bm.phi(), 0.0);
        assert!((bm.roots[1] + 10.0).abs() < 1e-12);
        // Flat or downward drift sends the process to -infinity, so the
        // undiscounted problem is rejected.
        assert!(LevyModel::brownian(0.0, 0.1).solve_roots(0.0).is_err());
        assert!(LevyModel::brownian(-0.05, 0.1).solve_roots(0.0).is_err());
        assert!(jump_example().solve_roots(-0.1).is_err());
    }
}
