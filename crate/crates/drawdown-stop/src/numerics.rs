//! Small numeric kernels shared across the crate: compensated summation,
//! closed-form polynomial roots with a bracketed Newton polish, adaptive
//! Simpson quadrature, golden-section search and sign-change bisection.
//!
//! These are deliberately hand-rolled: each one is a few dozen lines, the
//! tolerances are part of the crate's published contracts, and the solver's
//! accuracy budget depends on knowing exactly what each kernel does.

/// Absolute tolerance for adaptive quadrature.
pub const QUAD_ABS_TOL: f64 = 1e-10;
/// Relative tolerance for adaptive quadrature.
pub const QUAD_REL_TOL: f64 = 1e-8;
/// Recursion cap for adaptive quadrature; reached only on pathological
/// integrands, in which case the best available estimate is returned.
const QUAD_MAX_DEPTH: u32 = 48;
/// Minimum subdivision depth before convergence may be accepted, so narrow
/// features between the initial probe points are not silently skipped.
const QUAD_MIN_DEPTH: u32 = 5;

/// Maximum Newton steps when polishing a closed-form root.
const NEWTON_MAX_STEPS: u32 = 20;

/// Golden-section bracket width at which the search stops.
pub const GOLDEN_TOL: f64 = 1e-8;

const PHI: f64 = 1.618_033_988_749_895;
const RESP: f64 = 2.0 - PHI; // 1/phi^2, the probe offset ratio

/// Neumaier variant of Kahan summation. Order-sensitive inputs (exponential
/// mixtures) should be fed smallest-magnitude first.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Real roots of `a x^2 + b x + c`, descending. Uses the numerically stable
/// form (no cancellation between `-b` and the discriminant root).
pub fn quadratic_roots(a: f64, b: f64, c: f64) -> Option<[f64; 2]> {
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return None;
    }
    let sq = disc.sqrt();
    let q = -0.5 * (b + b.signum() * sq);
    let (r1, r2) = if q == 0.0 {
        (0.0, 0.0)
    } else {
        (q / a, c / q)
    };
    Some(if r1 >= r2 { [r1, r2] } else { [r2, r1] })
}

/// All real roots of `x^3 + p x^2 + q x + r` (monic), descending.
/// Trigonometric form when all three roots are real, Cardano otherwise.
pub fn cubic_roots_monic(p: f64, q: f64, r: f64) -> Vec<f64> {
    // Depressed form t^3 + a t + b with x = t - p/3.
    let shift = p / 3.0;
    let a = q - p * p / 3.0;
    let b = 2.0 * p * p * p / 27.0 - p * q / 3.0 + r;
    let disc = -4.0 * a * a * a - 27.0 * b * b;
    let mut roots = if disc > 0.0 {
        // Three distinct real roots.
        let m = 2.0 * (-a / 3.0).sqrt();
        let arg = (3.0 * b / (a * m)).clamp(-1.0, 1.0);
        let theta = arg.acos() / 3.0;
        (0..3)
            .map(|k| m * (theta - 2.0 * std::f64::consts::PI * k as f64 / 3.0).cos() - shift)
            .collect::<Vec<_>>()
    } else {
        // One real root (or a repeated pair on disc == 0).
        let half_b = b / 2.0;
        let d = (half_b * half_b + a * a * a / 27.0).max(0.0).sqrt();
        let u = (-half_b + d).cbrt();
        let v = (-half_b - d).cbrt();
        vec![u + v - shift]
    };
    roots.sort_by(|x, y| y.partial_cmp(x).unwrap());
    roots
}

/// Polish `x0` as a root of `f` with a bracketed Newton iteration: the
/// bracket is grown geometrically around `x0` until it straddles a sign
/// change, then Newton steps are taken and clipped to the bracket
/// (falling back to bisection when Newton leaves it). If no bracket is
/// found, `x0` is returned unchanged — the closed form already carries
/// near-machine accuracy and polishing is a safety net, not a requirement.
pub fn polish_root(f: impl Fn(f64) -> f64, df: impl Fn(f64) -> f64, x0: f64) -> f64 {
    let mut h = 1e-9 * (1.0 + x0.abs());
    let (mut lo, mut hi) = (x0, x0);
    let mut found = false;
    for _ in 0..60 {
        lo = x0 - h;
        hi = x0 + h;
        if f(lo).signum() != f(hi).signum() {
            found = true;
            break;
        }
        h *= 2.0;
    }
    if !found {
        return x0;
    }
    let (mut lo, mut hi, mut x) = (lo, hi, x0);
    let mut flo = f(lo);
    for _ in 0..NEWTON_MAX_STEPS {
        let fx = f(x);
        if fx == 0.0 {
            return x;
        }
        if fx.signum() == flo.signum() {
            lo = x;
            flo = fx;
        } else {
            hi = x;
        }
        let d = df(x);
        let newton = if d != 0.0 { x - fx / d } else { f64::NAN };
        x = if newton.is_finite() && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (hi - lo).abs() <= f64::EPSILON * (1.0 + x.abs()) {
            break;
        }
    }
    x
}

/// Adaptive Simpson quadrature of `f` over `[a, b]` to the crate tolerances.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    adaptive_simpson_tol(f, a, b, QUAD_ABS_TOL, QUAD_REL_TOL)
}

/// Adaptive Simpson with explicit tolerances.
pub fn adaptive_simpson_tol(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
) -> f64 {
    if a == b {
        return 0.0;
    }
    let m = 0.5 * (a + b);
    let (fa, fm, fb) = (f(a), f(m), f(b));
    let whole = simpson(a, b, fa, fm, fb);
    recurse(f, a, b, fa, fm, fb, whole, abs_tol, rel_tol, QUAD_MAX_DEPTH)
}

#[inline]
fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn recurse(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    abs_tol: f64,
    rel_tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let (flm, frm) = (f(lm), f(rm));
    let left = simpson(a, m, fa, flm, fm);
    let right = simpson(m, b, fm, frm, fb);
    let refined = left + right;
    let err = refined - whole;
    let tol = abs_tol.max(rel_tol * refined.abs());
    let deep_enough = depth <= QUAD_MAX_DEPTH - QUAD_MIN_DEPTH;
    if depth == 0 || (deep_enough && err.abs() <= 15.0 * tol) {
        // Richardson correction of the composite estimate.
        return refined + err / 15.0;
    }
    recurse(f, a, m, fa, flm, fm, left, 0.5 * abs_tol, rel_tol, depth - 1)
        + recurse(f, m, b, fm, frm, fb, right, 0.5 * abs_tol, rel_tol, depth - 1)
}

/// Golden-section maximisation of `f` on `[lo, hi]`; returns `(argmax, max)`.
/// Assumes a unimodal `f` on the bracket; callers scan first to localise.
pub fn golden_section_max(f: impl Fn(f64) -> f64, lo: f64, hi: f64, tol: f64) -> (f64, f64) {
    let (mut a, mut b) = (lo, hi);
    let mut x1 = a + RESP * (b - a);
    let mut x2 = b - RESP * (b - a);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while b - a > tol {
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = b - RESP * (b - a);
            f2 = f(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = a + RESP * (b - a);
            f1 = f(x1);
        }
    }
    let xm = 0.5 * (a + b);
    let fm = f(xm);
    if fm >= f1 && fm >= f2 {
        (xm, fm)
    } else if f1 >= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// Bisection for a sign change of `f` on `[lo, hi]` down to width `tol`.
/// Requires `f(lo)` and `f(hi)` to have opposite signs.
pub fn bisect_sign_change(f: impl Fn(f64) -> f64, lo: f64, hi: f64, tol: f64) -> f64 {
    let (mut a, mut b) = (lo, hi);
    let mut fa = f(a);
    debug_assert!(fa.signum() != f(b).signum());
    while b - a > tol {
        let m = 0.5 * (a + b);
        let fm = f(m);
        if fm == 0.0 {
            return m;
        }
        if fm.signum() == fa.signum() {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

/// `integral_{y0}^{y1} e^{u y} dy`, stable for `u` near zero via `expm1`.
#[inline]
pub fn exp_integral(u: f64, y0: f64, y1: f64) -> f64 {
    if u == 0.0 {
        return y1 - y0;
    }
    (u * y0).exp() * (u * (y1 - y0)).exp_m1() / u
}

/// `exp(u)` specialised for tiny `|u|` (diffusion increments in the Monte
/// Carlo stepper). Degree-4 expansion, relative error < 9e-13 for
/// |u| ≤ 0.01; falls back to `f64::exp` outside that window.
#[inline]
pub fn exp_small(u: f64) -> f64 {
    if u.abs() <= 0.01 {
        1.0 + u * (1.0 + u * (0.5 + u * (1.0 / 6.0 + u * (1.0 / 24.0))))
    } else {
        u.exp()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Independent root oracle: scan for sign changes, then bisect. Used to
    /// check the closed forms without sharing any code path with them.
    fn scan_roots(f: impl Fn(f64) -> f64 + Copy, lo: f64, hi: f64, n: usize) -> Vec<f64> {
        let mut out = Vec::new();
        let step = (hi - lo) / n as f64;
        let mut x0 = lo;
        let mut f0 = f(x0);
        for i in 1..=n {
            let x1 = lo + step * i as f64;
            let f1 = f(x1);
            if f0 == 0.0 {
                out.push(x0);
            } else if f0.signum() != f1.signum() {
                out.push(bisect_sign_change(f, x0, x1, 1e-13));
            }
            x0 = x1;
            f0 = f1;
        }
        out.sort_by(|a, b| b.partial_cmp(a).unwrap());
        out
    }

    #[test]
    fn quadratic_matches_scan_oracle() {
        // 0.005 λ^2 + 0.05 λ − 0.1, the Brownian ψ(λ) − q at q = 0.1.
        let roots = quadratic_roots(0.005, 0.05, -0.1).unwrap();
        let oracle = scan_roots(|x| 0.005 * x * x + 0.05 * x - 0.1, -100.0, 100.0, 20_000);
        assert_eq!(oracle.len(), 2);
        for (r, o) in roots.iter().zip(&oracle) {
            assert!((r - o).abs() < 1e-9, "root {r} vs oracle {o}");
        }
        assert!((roots[0] - 1.708_203_932_499_37).abs() < 1e-12);
        assert!((roots[1] + 11.708_203_932_499_37).abs() < 1e-12);
    }

    #[test]
    fn cubic_matches_scan_oracle() {
        // λ^3 + 60 λ^2 + 80 λ − 200: the jump example's ψ(λ) − q cleared of
        // its pole and rescaled to monic.
        let roots = cubic_roots_monic(60.0, 80.0, -200.0);
        assert_eq!(roots.len(), 3);
        let oracle = scan_roots(
            |x| x * x * x + 60.0 * x * x + 80.0 * x - 200.0,
            -80.0,
            20.0,
            200_000,
        );
        assert_eq!(oracle.len(), 3);
        for (r, o) in roots.iter().zip(&oracle) {
            assert!((r - o).abs() < 1e-8, "root {r} vs oracle {o}");
        }
    }

    #[test]
    fn cubic_single_real_root() {
        // x^3 - 1 has one real root.
        let roots = cubic_roots_monic(0.0, 0.0, -1.0);
        assert_eq!(roots.len(), 1);
        assert!((roots[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn polish_sharpens_a_perturbed_root() {
        let f = |x: f64| x * x - 2.0;
        let df = |x: f64| 2.0 * x;
        let x = polish_root(f, df, 1.414);
        assert!((x - std::f64::consts::SQRT_2).abs() < 1e-14);
    }

    #[test]
    fn simpson_on_smooth_integrands() {
        let v = adaptive_simpson(&|x: f64| x.exp(), 0.0, 1.0);
        assert!((v - (std::f64::consts::E - 1.0)).abs() < 1e-12);
        // A sharply peaked integrand still meets the tolerance.
        let v = adaptive_simpson(&|x: f64| (-(x - 0.3).powi(2) * 4000.0).exp(), 0.0, 1.0);
        let exact = (std::f64::consts::PI / 4000.0).sqrt(); // erf(..) ≈ 1 to 1e-13
        assert!((v - exact).abs() < 1e-10, "{v} vs {exact}");
    }

    #[test]
    fn golden_section_finds_interior_max() {
        let (x, fx) = golden_section_max(|x| -(x - 0.37).powi(2), 0.0, 1.0, GOLDEN_TOL);
        assert!((x - 0.37).abs() < 1e-7);
        assert!(fx <= 0.0 && fx > -1e-13);
    }

    #[test]
    fn compensated_sum_beats_naive() {
        let mut cs = CompensatedSum::new();
        let xs = [1e16, 3.25, -1e16, 2.125];
        let mut naive = 0.0;
        for x in xs {
            cs.add(x);
            naive += x;
        }
        assert!((cs.value() - (3.25 + 2.125)).abs() < 1e-12);
        // The naive sum rounds the small terms away at the 1e16 scale.
        assert!((naive - (3.25 + 2.125)).abs() > 0.5);
    }

    #[test]
    fn exp_small_matches_exp() {
        for &u in &[-0.01, -0.003, -1e-5, 0.0, 1e-5, 0.004, 0.01, 0.3, -2.0] {
            let rel = (exp_small(u) - u.exp()).abs() / u.exp();
            assert!(rel < 1e-12, "u={u} rel={rel}");
        }
    }

    #[test]
    fn exp_integral_matches_quadrature() {
        for &u in &[-11.5, -0.7, -1e-9, 0.0, 1e-9, 0.5, 11.2] {
            let (y0, y1) = (0.1, 0.9);
            let quad = adaptive_simpson(&|y: f64| (u * y).exp(), y0, y1);
            let closed = exp_integral(u, y0, y1);
            assert!(
                (closed - quad).abs() <= 1e-10 * quad.abs().max(1.0),
                "u={u} closed={closed} quad={quad}"
            );
        }
        assert_eq!(exp_integral(3.0, 0.4, 0.4), 0.0);
    }
}
