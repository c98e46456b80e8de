//! Interaction kernels `J` and their two-sided exponential transforms
//! `M(z) = ∫ J(s) e^{-zs} ds`.

use std::f64::consts::PI;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Exponent beyond which `exp` overflows in double precision.
const EXP_LIMIT: f64 = 700.0;

/// Normalization of the bump profile `(1 - t²)²` on `[-1, 1]`.
const BUMP_NORM: f64 = 15.0 / 16.0;

/// `∫_{-1}^{1} |d²/dt² (1-t²)²| dt`, used to bound the bump transform on the
/// imaginary axis after two integrations by parts.
const BUMP_SECOND_DERIVATIVE_L1: f64 = 32.0 / (3.0 * 1.732_050_807_568_877_2);

/// Boundary jumps plus `∫|d³/dt³ (1-t²)²|` for a third integration by parts.
const BUMP_THIRD_ORDER_CONSTANT: f64 = 40.0;

#[derive(Debug, Clone, PartialEq)]
pub enum KernelFamily {
    /// `J(s) = exp(-s²/2σ²) / (σ√(2π))`.
    Gaussian { sigma: f64 },
    /// `J(s) = (β/2) exp(-β|s|)`. Exponential moments exist only for `|ρ| < β`.
    Laplace { beta: f64 },
    /// `J(s) = (15/16R) (1 - (s/R)²)²` on `[-R, R]`.
    Bump { radius: f64 },
    Tabulated(TabulatedKernel),
}

/// Uniformly spaced kernel samples, linearly interpolated and zero outside.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedKernel {
    pub start: f64,
    pub spacing: f64,
    pub values: Vec<f64>,
    /// Factor the raw samples were multiplied by to reach unit mass.
    pub renormalization: f64,
}

impl TabulatedKernel {
    fn end(&self) -> f64 {
        self.start + self.spacing * (self.values.len() - 1) as f64
    }

    fn abscissa(&self, k: usize) -> f64 {
        self.start + self.spacing * k as f64
    }

    fn trapezoid_weight(&self, k: usize) -> f64 {
        if k == 0 || k + 1 == self.values.len() {
            0.5 * self.spacing
        } else {
            self.spacing
        }
    }

    fn eval(&self, s: f64) -> f64 {
        if s < self.start || s > self.end() {
            return 0.0;
        }
        let x = (s - self.start) / self.spacing;
        let k = (x.floor() as usize).min(self.values.len() - 2);
        let t = x - k as f64;
        (1.0 - t) * self.values[k] + t * self.values[k + 1]
    }
}

/// An interaction kernel together with a mass multiplier.
///
/// Well-formed kernels have `mass == 1`; other masses exist only so that
/// hypothesis checks can be exercised on deliberately broken input.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelSpec {
    family: KernelFamily,
    mass: f64,
}

/// Serializable description of a kernel for reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSummary {
    pub family: String,
    pub parameter: f64,
    pub mass: f64,
    pub support_radius: Option<f64>,
    pub renormalization: Option<f64>,
}

impl KernelSpec {
    pub fn gaussian(sigma: f64) -> Result<Self> {
        positive("gaussian sigma", sigma)?;
        Ok(Self::new(KernelFamily::Gaussian { sigma }))
    }

    pub fn laplace(beta: f64) -> Result<Self> {
        positive("laplace beta", beta)?;
        Ok(Self::new(KernelFamily::Laplace { beta }))
    }

    pub fn bump(radius: f64) -> Result<Self> {
        positive("bump radius", radius)?;
        Ok(Self::new(KernelFamily::Bump { radius }))
    }

    /// Builds a tabulated kernel from uniformly spaced samples and rescales
    /// it to unit trapezoid mass.
    pub fn tabulated(abscissae: &[f64], values: &[f64]) -> Result<Self> {
        if abscissae.len() != values.len() {
            return Err(Error::Spec("tabulated kernel: column lengths differ".into()));
        }
        if abscissae.len() < 3 {
            return Err(Error::Spec("tabulated kernel needs at least 3 samples".into()));
        }
        let spacing = abscissae[1] - abscissae[0];
        if !(spacing > 0.0) {
            return Err(Error::Spec("tabulated kernel abscissae must increase".into()));
        }
        for (k, pair) in abscissae.windows(2).enumerate() {
            if ((pair[1] - pair[0]) - spacing).abs() > 1e-9 * spacing.max(1.0) {
                return Err(Error::Spec(format!(
                    "tabulated kernel is not uniformly spaced near row {}",
                    k + 2
                )));
            }
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Spec("tabulated kernel has non-finite samples".into()));
        }
        let mut table = TabulatedKernel {
            start: abscissae[0],
            spacing,
            values: values.to_vec(),
            renormalization: 1.0,
        };
        let raw_mass: f64 = (0..table.values.len())
            .map(|k| table.trapezoid_weight(k) * table.values[k])
            .sum();
        if !(raw_mass > 0.0) {
            return Err(Error::Spec("tabulated kernel has non-positive mass".into()));
        }
        let factor = 1.0 / raw_mass;
        table.values.iter_mut().for_each(|v| *v *= factor);
        table.renormalization = factor;
        Ok(Self::new(KernelFamily::Tabulated(table)))
    }

    /// Parses two-column numeric text `s J(s)`; `#` starts a comment.
    pub fn tabulated_from_text(text: &str) -> Result<Self> {
        let mut s = Vec::new();
        let mut j = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split(|c: char| c.is_whitespace() || c == ',').filter(|c| !c.is_empty()).collect();
            if cols.len() != 2 {
                return Err(Error::Parse(format!(
                    "kernel table line {}: expected two columns",
                    lineno + 1
                )));
            }
            let parse = |c: &str| {
                c.parse::<f64>()
                    .map_err(|e| Error::Parse(format!("kernel table line {}: {e}", lineno + 1)))
            };
            s.push(parse(cols[0])?);
            j.push(parse(cols[1])?);
        }
        Self::tabulated(&s, &j)
    }

    pub fn tabulated_from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        Self::tabulated_from_text(&text)
    }

    fn new(family: KernelFamily) -> Self {
        Self { family, mass: 1.0 }
    }

    /// Multiplies the kernel by `mass` (for constructing (H1) violations).
    pub fn with_mass(mut self, mass: f64) -> Self {
        self.mass = mass;
        self
    }

    pub fn family(&self) -> &KernelFamily {
        &self.family
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn renormalization(&self) -> Option<f64> {
        match &self.family {
            KernelFamily::Tabulated(t) => Some(t.renormalization),
            _ => None,
        }
    }

    pub fn summary(&self) -> KernelSummary {
        let (family, parameter) = match &self.family {
            KernelFamily::Gaussian { sigma } => ("gaussian", *sigma),
            KernelFamily::Laplace { beta } => ("laplace", *beta),
            KernelFamily::Bump { radius } => ("bump", *radius),
            KernelFamily::Tabulated(t) => ("tabulated", t.spacing),
        };
        KernelSummary {
            family: family.to_string(),
            parameter,
            mass: self.mass,
            support_radius: self.support_radius(),
            renormalization: self.renormalization(),
        }
    }

    pub fn eval(&self, s: f64) -> f64 {
        let base = match &self.family {
            KernelFamily::Gaussian { sigma } => {
                (-0.5 * (s / sigma).powi(2)).exp() / (sigma * (2.0 * PI).sqrt())
            }
            KernelFamily::Laplace { beta } => 0.5 * beta * (-beta * s.abs()).exp(),
            KernelFamily::Bump { radius } => {
                let t = s / radius;
                if t.abs() >= 1.0 {
                    0.0
                } else {
                    BUMP_NORM / radius * (1.0 - t * t).powi(2)
                }
            }
            KernelFamily::Tabulated(t) => t.eval(s),
        };
        self.mass * base
    }

    /// Radius of the support, `None` when the support is unbounded.
    pub fn support_radius(&self) -> Option<f64> {
        match &self.family {
            KernelFamily::Gaussian { .. } | KernelFamily::Laplace { .. } => None,
            KernelFamily::Bump { radius } => Some(*radius),
            KernelFamily::Tabulated(t) => Some(t.start.abs().max(t.end().abs())),
        }
    }

    /// Radius beyond which `J` is below ~1e-30 of its peak; equals the
    /// support radius for compactly supported kernels.
    pub fn effective_radius(&self) -> f64 {
        match &self.family {
            KernelFamily::Gaussian { sigma } => 12.0 * sigma,
            KernelFamily::Laplace { beta } => 70.0 / beta,
            _ => self.support_radius().unwrap_or(0.0),
        }
    }

    /// Supremum of `|Re z|` for which `M(z)` is finite.
    pub fn abscissa_limit(&self) -> f64 {
        match &self.family {
            KernelFamily::Laplace { beta } => *beta,
            _ => f64::INFINITY,
        }
    }

    /// Whether `∫ J(s) e^{ρs} ds < ∞` for every real `ρ`.
    pub fn has_all_exponential_moments(&self) -> bool {
        !matches!(self.family, KernelFamily::Laplace { .. })
    }

    /// `M(z) = ∫ J(s) e^{-zs} ds`.
    pub fn transform(&self, z: Complex64) -> Result<Complex64> {
        let value = match &self.family {
            KernelFamily::Gaussian { sigma } => {
                let e = z * z * (0.5 * sigma * sigma);
                if e.re > EXP_LIMIT {
                    if z.im == 0.0 {
                        // Overflow on the real axis is a genuine +inf.
                        return Ok(Complex64::new(f64::INFINITY * self.mass.signum(), 0.0));
                    }
                    return Err(Error::TransformDivergence { z });
                }
                e.exp()
            }
            KernelFamily::Laplace { beta } => {
                if z.re.abs() >= *beta {
                    return Err(Error::TransformDivergence { z });
                }
                let b2 = beta * beta;
                Complex64::new(b2, 0.0) / (b2 - z * z)
            }
            KernelFamily::Bump { radius } => {
                let w = z * radius;
                if w.re.abs() > EXP_LIMIT {
                    return Err(Error::TransformDivergence { z });
                }
                bump_profile_transform(w) * BUMP_NORM
            }
            KernelFamily::Tabulated(t) => {
                let reach = t.start.abs().max(t.end().abs());
                if z.re.abs() * reach > EXP_LIMIT {
                    return Err(Error::TransformDivergence { z });
                }
                (0..t.values.len())
                    .map(|k| (-z * t.abscissa(k)).exp() * (t.trapezoid_weight(k) * t.values[k]))
                    .sum()
            }
        };
        Ok(value * self.mass)
    }

    /// `∫ s J(s) e^{-zs} ds = -M'(z)`.
    pub fn moment_transform(&self, z: Complex64) -> Result<Complex64> {
        let value = match &self.family {
            KernelFamily::Gaussian { sigma } => {
                let s2 = sigma * sigma;
                let e = z * z * (0.5 * s2);
                if e.re > EXP_LIMIT {
                    return Err(Error::TransformDivergence { z });
                }
                -z * s2 * e.exp()
            }
            KernelFamily::Laplace { beta } => {
                if z.re.abs() >= *beta {
                    return Err(Error::TransformDivergence { z });
                }
                let b2 = beta * beta;
                let den = b2 - z * z;
                -z * (2.0 * b2) / (den * den)
            }
            KernelFamily::Bump { radius } => {
                let w = z * radius;
                if w.re.abs() > EXP_LIMIT {
                    return Err(Error::TransformDivergence { z });
                }
                -bump_profile_transform_derivative(w) * (BUMP_NORM * radius)
            }
            KernelFamily::Tabulated(t) => {
                let reach = t.start.abs().max(t.end().abs());
                if z.re.abs() * reach > EXP_LIMIT {
                    return Err(Error::TransformDivergence { z });
                }
                (0..t.values.len())
                    .map(|k| {
                        let s = t.abscissa(k);
                        (-z * s).exp() * (t.trapezoid_weight(k) * s * t.values[k])
                    })
                    .sum()
            }
        };
        Ok(value * self.mass)
    }

    /// `M(z)` by direct quadrature, independent of the closed forms: the
    /// trapezoid rule, except for the Laplace kernel, whose kink at 0 gets
    /// composite Simpson with 0 on a panel boundary.
    pub fn transform_by_quadrature(&self, z: Complex64) -> Result<Complex64> {
        let (lo, hi, steps) = self.quadrature_range(z);
        let simpson = matches!(self.family, KernelFamily::Laplace { .. });
        let h = (hi - lo) / steps as f64;
        let mut acc = Complex64::new(0.0, 0.0);
        for k in 0..=steps {
            let s = lo + h * k as f64;
            let w = match (simpson, k == 0 || k == steps) {
                (false, true) => 0.5,
                (false, false) => 1.0,
                (true, true) => 1.0 / 3.0,
                (true, false) if k % 2 == 1 => 4.0 / 3.0,
                (true, false) => 2.0 / 3.0,
            };
            let e = -z * s;
            if e.re > EXP_LIMIT {
                return Err(Error::TransformDivergence { z });
            }
            acc += e.exp() * (w * self.eval(s));
        }
        Ok(acc * h)
    }

    fn quadrature_range(&self, z: Complex64) -> (f64, f64, usize) {
        match &self.family {
            KernelFamily::Gaussian { sigma } => {
                // Integrand is centred at -Re(z)σ² with width σ.
                let centre = -z.re * sigma * sigma;
                let half = (14.0 + z.im.abs() * sigma) * sigma;
                let steps = ((2.0 * half) / (sigma / 64.0)).ceil() as usize;
                (centre - half, centre + half, steps.max(2))
            }
            KernelFamily::Laplace { beta } => {
                let half = 80.0 / (beta - z.re.abs()).max(1e-3);
                let steps = (2.0 * half * beta * 400.0 / 4.0).ceil() as usize * 4;
                (-half, half, steps.max(4))
            }
            KernelFamily::Bump { radius } => (-radius, *radius, 40_000),
            KernelFamily::Tabulated(t) => (t.start, t.end(), (t.values.len() - 1).max(2)),
        }
    }

    /// Upper bound for `sup_{|η'| ≥ η} |M(iη')|`.
    pub fn imaginary_axis_bound(&self, eta: f64) -> f64 {
        let eta = eta.abs();
        let bound = match &self.family {
            KernelFamily::Gaussian { sigma } => (-0.5 * (eta * sigma).powi(2)).exp(),
            KernelFamily::Laplace { beta } => beta * beta / (beta * beta + eta * eta),
            KernelFamily::Bump { radius } => {
                let w = eta * radius;
                if w > 0.0 {
                    (BUMP_NORM * (BUMP_SECOND_DERIVATIVE_L1 / (w * w)).min(BUMP_THIRD_ORDER_CONSTANT / (w * w * w)))
                        .min(1.0)
                } else {
                    1.0
                }
            }
            KernelFamily::Tabulated(_) => 1.0,
        };
        bound * self.mass.abs()
    }
}

fn positive(what: &str, value: f64) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(Error::Spec(format!("{what} must be positive and finite, got {value}")))
    }
}

/// Switch-over between the power series and the closed form of the bump
/// transform; below it the closed form cancels catastrophically.
const BUMP_SERIES_RADIUS: f64 = 4.0;

/// Taylor coefficients `c_k` of `I(w) = ∫_{-1}^{1} (1-t²)² e^{-wt} dt = Σ c_k w^{2k}`.
fn bump_series_coefficient(k: usize) -> f64 {
    let kk = 2 * k;
    let moment = 1.0 / (kk + 1) as f64 - 2.0 / (kk + 3) as f64 + 1.0 / (kk + 5) as f64;
    let mut factorial = 1.0;
    for i in 2..=kk {
        factorial *= i as f64;
    }
    2.0 * moment / factorial
}

fn bump_profile_transform(w: Complex64) -> Complex64 {
    if w.norm() < BUMP_SERIES_RADIUS {
        let w2 = w * w;
        let mut term = Complex64::new(1.0, 0.0);
        let mut acc = Complex64::new(0.0, 0.0);
        for k in 0..40 {
            acc += term * bump_series_coefficient(k);
            term *= w2;
        }
        acc
    } else {
        let n = (w * w + 3.0) * w.sinh() - w * 3.0 * w.cosh();
        n * 16.0 / w.powi(5)
    }
}

fn bump_profile_transform_derivative(w: Complex64) -> Complex64 {
    if w.norm() < BUMP_SERIES_RADIUS {
        let w2 = w * w;
        let mut term = w; // w^{2k-1} for k = 1
        let mut acc = Complex64::new(0.0, 0.0);
        for k in 1..40 {
            acc += term * (2.0 * k as f64 * bump_series_coefficient(k));
            term *= w2;
        }
        acc
    } else {
        let n = (w * w + 3.0) * w.sinh() - w * 3.0 * w.cosh();
        let dn = w * w * w.cosh() - w * w.sinh();
        (dn / w.powi(5) - n * 5.0 / w.powi(6)) * 16.0
    }
}
