//! Characteristic functions `Δ(z) = dz² − cz + (a − λ) + b·M(z)` of the
//! constant-coefficient limiting operators.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::KernelSpec;
use crate::model::{ModelProblem, Side};

/// Required accuracy of a real root, `|Δ(λ)| < ROOT_RESIDUAL`.
pub const ROOT_RESIDUAL: f64 = 1e-10;
/// Outermost bracket point for the real root search.
pub const BRACKET_LIMIT: f64 = 50.0;
/// `|Δ|` below this on a contour is treated as a zero on the contour.
pub const CONTOUR_GUARD: f64 = 1e-8;
/// Largest accepted distance of a winding number from an integer.
pub const WINDING_TOLERANCE: f64 = 0.1;
/// `|Δ(iη)|` below this counts as a zero on the imaginary axis.
pub const HYPERBOLICITY_TOL: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct CharFn {
    pub d: f64,
    pub c: f64,
    pub a: f64,
    pub b: f64,
    pub lambda: Complex64,
    pub kernel: KernelSpec,
}

impl CharFn {
    pub fn new(d: f64, c: f64, a: f64, b: f64, kernel: KernelSpec) -> Self {
        Self {
            d,
            c,
            a,
            b,
            lambda: Complex64::new(0.0, 0.0),
            kernel,
        }
    }

    /// Characteristic function of the limiting operator at `±∞` for speed `c`.
    pub fn for_side(problem: &ModelProblem, c: f64, side: Side) -> Self {
        let (a, b) = problem.constants().side(side);
        Self::new(problem.d(), c, a, b, problem.kernel().clone())
    }

    /// Same function for `L − λI`.
    pub fn shifted(mut self, lambda: Complex64) -> Self {
        self.lambda = lambda;
        self
    }

    /// Characteristic function of the formal adjoint, `c ↦ −c`, `λ ↦ λ̄`.
    pub fn adjoint(&self) -> Self {
        let mut adj = self.clone();
        adj.c = -self.c;
        adj.lambda = self.lambda.conj();
        adj
    }

    pub fn eval(&self, z: Complex64) -> Result<Complex64> {
        let poly = z * z * self.d - z * self.c + (self.a - self.lambda);
        if self.b == 0.0 {
            return Ok(poly);
        }
        Ok(poly + self.kernel.transform(z)? * self.b)
    }

    /// `Δ′(z) = 2dz − c − b∫sJ(s)e^{−zs}ds`.
    pub fn eval_prime(&self, z: Complex64) -> Result<Complex64> {
        let poly = z * (2.0 * self.d) - self.c;
        if self.b == 0.0 {
            return Ok(poly);
        }
        Ok(poly - self.kernel.moment_transform(z)? * self.b)
    }

    fn eval_real(&self, x: f64) -> Result<f64> {
        Ok(self.eval(Complex64::new(x, 0.0))?.re)
    }
}

pub fn eval_delta(cf: &CharFn, z: Complex64) -> Result<Complex64> {
    cf.eval(z)
}

pub fn eval_delta_prime(cf: &CharFn, z: Complex64) -> Result<Complex64> {
    cf.eval_prime(z)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RootPair {
    pub lambda_s: f64,
    pub lambda_u: f64,
    pub residual_s: f64,
    pub residual_u: f64,
}

/// The negative and positive real zeros of `Δ`.
///
/// `Δ` is convex on the real axis with `Δ(0) = a + b − λ < 0`, so each half
/// line carries exactly one zero. Brackets come from stepping outward through
/// `1, 2, 4, …, 32, 50`; each bracket is then shrunk by Newton steps that fall
/// back to bisection whenever they would leave it.
pub fn real_roots(cf: &CharFn) -> Result<RootPair> {
    if cf.lambda.im != 0.0 {
        return Err(Error::Hypothesis(format!(
            "real roots need a real shift, got λ = {}",
            cf.lambda
        )));
    }
    let a = cf.a - cf.lambda.re;
    if !(a < 0.0 && cf.b > 0.0 && cf.b < -a) {
        return Err(Error::Hypothesis(format!(
            "real roots need a − λ < 0 < b < −(a − λ); got a − λ = {a}, b = {}",
            cf.b
        )));
    }
    let (lambda_u, residual_u) = root_on_half_line(cf, 1.0)?;
    let (lambda_s, residual_s) = root_on_half_line(cf, -1.0)?;
    Ok(RootPair {
        lambda_s,
        lambda_u,
        residual_s,
        residual_u,
    })
}

fn root_on_half_line(cf: &CharFn, direction: f64) -> Result<(f64, f64)> {
    let limit = cf.kernel.abscissa_limit();
    let mut inner = 0.0;
    let mut outer = None;
    let mut step = 1.0_f64;
    loop {
        let mut r = step.min(BRACKET_LIMIT);
        let clipped = r >= limit;
        if clipped {
            r = limit * (1.0 - 1e-12);
        }
        let value = cf.eval_real(direction * r)?;
        if value > 0.0 {
            outer = Some(r);
            break;
        }
        inner = r;
        if clipped || r >= BRACKET_LIMIT {
            break;
        }
        step *= 2.0;
    }
    let Some(outer) = outer else {
        return Err(Error::Divergence { limit: inner });
    };
    // Work in the signed coordinate; Δ(lo) < 0 < Δ(hi).
    let (mut lo, mut hi) = (direction * inner, direction * outer);
    let mut x = 0.5 * (lo + hi);
    let mut best = (f64::INFINITY, x);
    for _ in 0..200 {
        let fx = cf.eval_real(x)?;
        if fx.abs() < best.0 {
            best = (fx.abs(), x);
        }
        if fx.abs() < 1e-15 {
            break;
        }
        if fx < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let slope = cf.eval_prime(Complex64::new(x, 0.0))?.re;
        let newton = x - fx / slope;
        let (left, right) = if lo < hi { (lo, hi) } else { (hi, lo) };
        x = if slope.is_finite() && slope != 0.0 && newton > left && newton < right {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (hi - lo).abs() <= 4.0 * f64::EPSILON * x.abs().max(1.0) {
            break;
        }
    }
    let x = best.1;
    let residual = cf.eval_real(x)?.abs();
    if residual >= ROOT_RESIDUAL {
        return Err(Error::Numerical(format!(
            "real root at {x} has residual {residual:e}"
        )));
    }
    Ok((x, residual))
}

/// Number of zeros of `Δ` in `re_lo < Re z < re_hi`, `|Im z| < im_max`, by the
/// argument principle along the rectangle boundary.
pub fn count_zeros_in_strip(cf: &CharFn, re_lo: f64, re_hi: f64, im_max: f64) -> Result<i64> {
    if !(re_lo < re_hi && im_max > 0.0) {
        return Err(Error::Spec(format!(
            "empty rectangle: re ∈ ({re_lo}, {re_hi}), |im| < {im_max}"
        )));
    }
    let corners = [
        Complex64::new(re_lo, -im_max),
        Complex64::new(re_hi, -im_max),
        Complex64::new(re_hi, im_max),
        Complex64::new(re_lo, im_max),
    ];
    // Boundary guard on a dense sampling of each edge.
    let mut min_modulus = f64::INFINITY;
    let mut at = corners[0];
    for k in 0..4 {
        let (z0, z1) = (corners[k], corners[(k + 1) % 4]);
        let samples = 4000;
        for j in 0..samples {
            let z = z0 + (z1 - z0) * (j as f64 / samples as f64);
            let m = cf.eval(z)?.norm();
            if m < min_modulus {
                min_modulus = m;
                at = z;
            }
        }
    }
    if min_modulus < CONTOUR_GUARD {
        return Err(Error::Contour { min_modulus, at });
    }

    let mut last = f64::NAN;
    for (tol, depth) in [(1e-7, 40), (1e-10, 55)] {
        let mut total = Complex64::new(0.0, 0.0);
        for k in 0..4 {
            total += edge_log_derivative(cf, corners[k], corners[(k + 1) % 4], tol, depth)?;
        }
        let winding = total.im / (2.0 * PI);
        last = winding;
        if (winding - winding.round()).abs() <= WINDING_TOLERANCE {
            return Ok(winding.round() as i64);
        }
    }
    Err(Error::Accuracy { value: last })
}

/// `∫ Δ′/Δ dz` along the segment from `z0` to `z1`, by adaptive Simpson.
fn edge_log_derivative(cf: &CharFn, z0: Complex64, z1: Complex64, tol: f64, depth: u32) -> Result<Complex64> {
    let dz = z1 - z0;
    let g = |t: f64| -> Result<Complex64> {
        let z = z0 + dz * t;
        Ok(cf.eval_prime(z)? / cf.eval(z)? * dz)
    };
    // Pre-split so that oscillations of M along long edges are sampled.
    let pieces = 64;
    let mut total = Complex64::new(0.0, 0.0);
    for p in 0..pieces {
        let a = p as f64 / pieces as f64;
        let b = (p + 1) as f64 / pieces as f64;
        let (fa, fm, fb) = (g(a)?, g(0.5 * (a + b))?, g(b)?);
        let whole = (fa + fm * 4.0 + fb) * ((b - a) / 6.0);
        total += adaptive_simpson(&g, a, b, fa, fm, fb, whole, tol / pieces as f64, depth)?;
    }
    Ok(total)
}

#[allow(clippy::too_many_arguments)]
fn adaptive_simpson<F>(
    g: &F,
    a: f64,
    b: f64,
    fa: Complex64,
    fm: Complex64,
    fb: Complex64,
    whole: Complex64,
    tol: f64,
    depth: u32,
) -> Result<Complex64>
where
    F: Fn(f64) -> Result<Complex64>,
{
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (g(lm)?, g(rm)?);
    let left = (fa + flm * 4.0 + fm) * ((m - a) / 6.0);
    let right = (fm + frm * 4.0 + fb) * ((b - m) / 6.0);
    let delta = left + right - whole;
    if depth == 0 || delta.norm() <= 15.0 * tol {
        return Ok(left + right + delta / 15.0);
    }
    Ok(adaptive_simpson(g, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)?
        + adaptive_simpson(g, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)?)
}

/// Result of scanning `|Δ(iη)|` along the imaginary axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperbolicityScan {
    pub hyperbolic: bool,
    pub min_modulus: f64,
    pub eta_at_min: f64,
    /// `|Δ(iη)|` is bounded below by a positive margin for `|η| ≥ window`.
    pub window: f64,
}

pub fn is_hyperbolic(cf: &CharFn) -> bool {
    hyperbolicity_scan(cf).map(|s| s.hyperbolic).unwrap_or(false)
}

/// Scans `|Δ(iη)|` on `[−W, W]`, where `W` is chosen so that
/// `|−dη² − icη + (a − λ)| − |b|·sup_{|η'|≥|η|}|M(iη')|` exceeds the
/// tolerance for every `|η| ≥ W`.
pub fn hyperbolicity_scan(cf: &CharFn) -> Result<HyperbolicityScan> {
    let window = scan_window(cf);
    let modulus = |eta: f64| -> Result<f64> { Ok(cf.eval(Complex64::new(0.0, eta))?.norm()) };
    let points = ((window / 0.005).ceil() as usize).clamp(2000, 200_000);
    let step = 2.0 * window / points as f64;
    let mut best = (f64::INFINITY, 0.0);
    let mut k_best = 0;
    for k in 0..=points {
        let eta = -window + step * k as f64;
        let m = modulus(eta)?;
        if m < best.0 {
            best = (m, eta);
            k_best = k;
        }
    }
    // η = 0 is a likely minimizer for real shifts; sample it exactly.
    let m0 = modulus(0.0)?;
    if m0 < best.0 {
        best = (m0, 0.0);
    }
    // Golden-section refinement around the discrete minimizer.
    let mut lo = -window + step * (k_best.max(1) - 1) as f64;
    let mut hi = -window + step * (k_best + 1).min(points) as f64;
    let ratio = 0.5 * (5.0_f64.sqrt() - 1.0);
    for _ in 0..80 {
        let x1 = hi - ratio * (hi - lo);
        let x2 = lo + ratio * (hi - lo);
        let (m1, m2) = (modulus(x1)?, modulus(x2)?);
        if m1 < best.0 {
            best = (m1, x1);
        }
        if m2 < best.0 {
            best = (m2, x2);
        }
        if m1 < m2 {
            hi = x2;
        } else {
            lo = x1;
        }
    }
    Ok(HyperbolicityScan {
        hyperbolic: best.0 > HYPERBOLICITY_TOL,
        min_modulus: best.0,
        eta_at_min: best.1,
        window,
    })
}

fn scan_window(cf: &CharFn) -> f64 {
    let shift = cf.a - cf.lambda.re;
    // Beyond η₀ both parts of |−dη² + shift − i(cη + Im λ)|² are monotone in |η|.
    let mut eta0: f64 = 1.0;
    if cf.d > 0.0 && shift > 0.0 {
        eta0 = eta0.max((shift / cf.d).sqrt());
    }
    if cf.c != 0.0 {
        eta0 = eta0.max(cf.lambda.im.abs() / cf.c.abs());
    }
    let lower = |eta: f64| {
        let poly = |e: f64| Complex64::new(-cf.d * e * e + shift, -(cf.c * e + cf.lambda.im)).norm();
        poly(eta).min(poly(-eta)) - cf.b.abs() * cf.kernel.imaginary_axis_bound(eta)
    };
    let mut eta = eta0;
    for _ in 0..60 {
        if lower(eta) > 10.0 * HYPERBOLICITY_TOL {
            return eta;
        }
        eta *= 2.0;
    }
    eta
}

/// Spectral regions of the linearization about a wave with speed `c`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionReport {
    pub iota_bar: f64,
    pub iota_underbar: f64,
    pub d: f64,
    pub c: f64,
    /// `b⁺ ∧ b⁻`.
    pub b_min: f64,
}

impl RegionReport {
    /// `Re λ > ι̅`.
    pub fn in_omega_plus(&self, lambda: Complex64) -> bool {
        lambda.re > self.iota_bar
    }

    /// `Re λ < ι_`.
    pub fn in_omega_minus(&self, lambda: Complex64) -> bool {
        lambda.re < self.iota_underbar
    }

    /// `ι_ ≤ Re λ ≤ ι̅`.
    pub fn in_strip(&self, lambda: Complex64, margin: f64) -> bool {
        lambda.re >= self.iota_underbar - margin && lambda.re <= self.iota_bar + margin
    }

    /// Ξ with `|Im λ| > √(ι̅ − Re λ) + (b⁺ ∧ b⁻)` below `ι̅`, as stated with the
    /// spectral theorem.
    pub fn in_xi_theorem(&self, lambda: Complex64) -> bool {
        self.xi(lambda, 1.0)
    }

    /// Ξ with the factor `c²` in front of the square root, as stated with the
    /// hyperbolicity proposition.
    pub fn in_xi_appendix(&self, lambda: Complex64) -> bool {
        self.xi(lambda, self.c * self.c)
    }

    fn xi(&self, lambda: Complex64, factor: f64) -> bool {
        if lambda.re > self.iota_bar {
            return true;
        }
        lambda.im.abs() > factor * (self.iota_bar - lambda.re).sqrt() + self.b_min
    }

    /// Whether both limiting operators of `Π_L − λ` are expected hyperbolic.
    pub fn asymptotically_hyperbolic(&self, lambda: Complex64) -> bool {
        if self.d > 0.0 {
            self.in_xi_theorem(lambda)
        } else {
            self.in_omega_plus(lambda) || self.in_omega_minus(lambda)
        }
    }
}

pub fn spectrum_regions(problem: &ModelProblem, c: f64) -> RegionReport {
    let k = problem.constants();
    RegionReport {
        iota_bar: k.iota_bar(),
        iota_underbar: k.iota_underbar(),
        d: problem.d(),
        c,
        b_min: k.b_plus.min(k.b_minus),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{BuiltinModel, PhaseParams};

    fn gauss() -> KernelSpec {
        KernelSpec::gaussian(1.0).unwrap()
    }

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    /// Plain bisection on a continuous function with a sign change.
    fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
        let flo = f(lo);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if (f(mid) > 0.0) == (flo > 0.0) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn eval_examples() {
        let cf = CharFn::new(1.0, 0.0, -2.0, 1.0, gauss());
        assert!((cf.eval(c(0.0, 0.0)).unwrap() - c(-1.0, 0.0)).norm() < 1e-12);

        let cf = CharFn::new(0.0, 1.0, -1.0, 0.5, gauss());
        let expected = c(-1.0 + 0.5 * (-2.0_f64).exp(), -2.0);
        assert!((cf.eval(c(0.0, 2.0)).unwrap() - expected).norm() < 1e-12);
        assert!((expected.re + 0.932_332).abs() < 1e-6);

        let cf = CharFn::new(0.7, 0.3, -1.5, 0.0, gauss());
        for x in [-3.0, 0.5, 2.0] {
            assert_eq!(cf.eval(c(x, 0.0)).unwrap().re, 0.7 * x * x - 0.3 * x - 1.5);
        }
    }

    #[test]
    fn eval_prime_examples() {
        let cf = CharFn::new(0.0, 1.0, -1.0, 0.0, gauss());
        assert_eq!(cf.eval_prime(c(0.3, 0.2)).unwrap(), c(-1.0, 0.0));
        let cf = CharFn::new(0.0, 0.0, -1.0, 1.0, gauss());
        assert!(cf.eval_prime(c(0.0, 0.0)).unwrap().norm() < 1e-15);
    }

    #[test]
    fn value_at_origin_is_a_plus_b() {
        let cf = CharFn::new(0.4, -0.3, -2.5, 0.7, KernelSpec::bump(2.0).unwrap());
        assert!((cf.eval(c(0.0, 0.0)).unwrap().re - (-1.8)).abs() < 1e-12);
    }

    #[test]
    fn real_roots_match_bisection_oracles() {
        let cf = CharFn::new(0.0, 1.0, -2.0, 1.0, gauss());
        let roots = real_roots(&cf).unwrap();
        let g = |z: f64| -z - 2.0 + (0.5 * z * z).exp();
        let s = bisect(g, -5.0, 0.0);
        let u = bisect(g, 0.0, 5.0);
        assert!((roots.lambda_s - s).abs() < 1e-12 && (roots.lambda_u - u).abs() < 1e-12);
        assert!((roots.lambda_s + 0.71).abs() < 0.01, "{}", roots.lambda_s);
        assert!((roots.lambda_u - 1.60).abs() < 0.01, "{}", roots.lambda_u);
        assert!(roots.residual_s < ROOT_RESIDUAL && roots.residual_u < ROOT_RESIDUAL);

        let cf = CharFn::new(1.0, 0.0, -2.0, 1.0, gauss());
        let roots = real_roots(&cf).unwrap();
        let t = bisect(|t| t + (0.5 * t).exp() - 2.0, 0.0, 2.0);
        assert!((roots.lambda_u - t.sqrt()).abs() < 1e-12);
        assert!((roots.lambda_u - 0.794).abs() < 1e-3);
        assert_eq!(roots.lambda_s, -roots.lambda_u);
    }

    #[test]
    fn real_roots_survive_round_off_speed() {
        let p = BuiltinModel::Ising.build();
        let reference = real_roots(&CharFn::for_side(&p, 0.0, Side::PlusInfinity)).unwrap();
        for speed in [-1.1919939676121243e-15, 1e-15, -1e-15] {
            let roots = real_roots(&CharFn::for_side(&p, speed, Side::PlusInfinity)).unwrap();
            assert!((roots.lambda_s - reference.lambda_s).abs() < 1e-12);
            assert!((roots.lambda_u - reference.lambda_u).abs() < 1e-12);
        }
    }

    #[test]
    fn real_roots_precondition_and_divergence() {
        let cf = CharFn::new(0.0, 1.0, -1.0, 2.0, gauss());
        assert!(matches!(real_roots(&cf), Err(Error::Hypothesis(_))));
        // Tiny kernel weight and huge |a|: Δ stays negative out to |z| = 50.
        let cf = CharFn::new(0.0, 0.0, -1e300, 1e-300, KernelSpec::bump(1e-3).unwrap());
        assert!(matches!(real_roots(&cf), Err(Error::Divergence { .. })));
    }

    #[test]
    fn laplace_roots_stay_inside_abscissa() {
        let cf = CharFn::new(0.0, 0.0, -2.0, 1.0, KernelSpec::laplace(0.5).unwrap());
        let roots = real_roots(&cf).unwrap();
        assert!(roots.lambda_u < 0.5 && roots.lambda_s > -0.5);
        // β²/(β² − z²) = 2 at the root.
        assert!((roots.lambda_u - 0.5 / 2.0_f64.sqrt()).abs() < 1e-10);
    }

    #[test]
    fn strip_counts() {
        let cf = CharFn::new(0.0, 1.0, -2.0, 1.0, gauss());
        let r = real_roots(&cf).unwrap();
        assert_eq!(count_zeros_in_strip(&cf, r.lambda_s - 0.1, r.lambda_u + 0.1, 30.0).unwrap(), 2);
        assert_eq!(count_zeros_in_strip(&cf, r.lambda_s + 0.01, r.lambda_u - 0.01, 30.0).unwrap(), 0);
        let affine = CharFn::new(0.0, 1.0, -1.0, 0.0, gauss());
        assert_eq!(count_zeros_in_strip(&affine, -2.0, 0.0, 5.0).unwrap(), 1);
    }

    #[test]
    fn strip_count_matches_grid_search_oracle() {
        // Local minima of |Δ| on a grid inside the rectangle that are close
        // to zero must number exactly the winding count.
        let cf = CharFn::new(0.0, 1.0, -2.0, 1.0, gauss());
        let r = real_roots(&cf).unwrap();
        let (lo, hi, im) = (r.lambda_s - 0.1, r.lambda_u + 0.1, 3.0);
        let (nx, ny) = (300, 600);
        let val = |i: usize, j: usize| {
            let z = c(lo + (hi - lo) * i as f64 / nx as f64, -im + 2.0 * im * j as f64 / ny as f64);
            cf.eval(z).unwrap().norm()
        };
        let mut minima = 0;
        for i in 1..nx {
            for j in 1..ny {
                let v = val(i, j);
                let neighbours = [val(i - 1, j), val(i + 1, j), val(i, j - 1), val(i, j + 1)];
                if v < 0.05 && neighbours.iter().all(|&n| v <= n) {
                    minima += 1;
                }
            }
        }
        assert_eq!(minima, 2);
    }

    #[test]
    fn zero_on_contour_is_rejected() {
        let cf = CharFn::new(0.0, 1.0, -1.0, 0.0, gauss());
        assert!(matches!(count_zeros_in_strip(&cf, -1.0, 0.0, 2.0), Err(Error::Contour { .. })));
    }

    #[test]
    fn hyperbolicity_examples() {
        let cf = CharFn::new(0.5, 0.3, -2.0, 1.0, gauss());
        assert!(is_hyperbolic(&cf));
        let cf = CharFn::new(0.5, 0.3, -2.0, 1.0, gauss()).shifted(c(-1.0, 0.0));
        let scan = hyperbolicity_scan(&cf).unwrap();
        assert!(!scan.hyperbolic && scan.eta_at_min.abs() < 1e-12);
        let cf = CharFn::new(0.5, 0.3, -2.0, 1.0, gauss()).shifted(c(0.0, 0.0));
        assert!(is_hyperbolic(&cf.shifted(c(-1.0 + 1.0, 0.0))));
    }

    #[test]
    fn right_of_strip_is_hyperbolic_for_builtins() {
        for m in BuiltinModel::ALL {
            let p = m.build();
            let iota = p.constants().iota_bar();
            for side in [Side::PlusInfinity, Side::MinusInfinity] {
                let cf = CharFn::for_side(&p, 0.0, side).shifted(c(iota + 1.0, 0.0));
                assert!(is_hyperbolic(&cf), "{m} {side:?}");
            }
        }
    }

    #[test]
    fn adjoint_symmetry() {
        let cf = CharFn::new(0.8, 0.6, -2.0, 0.9, gauss()).shifted(c(-0.3, 0.0));
        let adj = cf.adjoint();
        for k in 0..10 {
            let z = c(-1.0 + 0.2 * k as f64, 1.5 - 0.3 * k as f64);
            let lhs = adj.eval(z).unwrap();
            let rhs = cf.eval(-z).unwrap();
            assert!((lhs - rhs).norm() < 1e-12);
        }
    }

    #[test]
    fn region_examples() {
        let k = crate::model::EquilibriumConstants {
            a_plus: -2.0,
            a_minus: -2.0,
            b_plus: 1.0,
            b_minus: 1.0,
        };
        assert_eq!((k.iota_bar(), k.iota_underbar()), (-1.0, -3.0));
        let p = PhaseParams {
            epsilon: 0.1,
            ..Default::default()
        }
        .build()
        .unwrap();
        let regions = spectrum_regions(&p, 0.0);
        assert!((regions.iota_bar + 2.0).abs() < 1e-12);
        assert!((regions.iota_underbar + 2.2).abs() < 1e-12);
        assert!(regions.iota_underbar <= regions.iota_bar);
        for m in BuiltinModel::ALL {
            let r = spectrum_regions(&m.build(), 0.0);
            assert!(r.in_omega_plus(c(0.0, 0.0)));
            assert!(r.asymptotically_hyperbolic(c(0.0, 0.0)));
        }
    }

    #[test]
    fn xi_variants_differ_when_c_is_not_one() {
        let r = RegionReport {
            iota_bar: -1.0,
            iota_underbar: -3.0,
            d: 1.0,
            c: 0.5,
            b_min: 0.2,
        };
        // √(ι̅ − Re λ) = 1: theorem form needs |Im| > 1.2, appendix form |Im| > 0.45.
        let lambda = c(-2.0, 0.8);
        assert!(!r.in_xi_theorem(lambda));
        assert!(r.in_xi_appendix(lambda));
        assert!(r.in_xi_theorem(c(-0.5, 0.0)) && r.in_xi_appendix(c(-0.5, 0.0)));
    }
}
