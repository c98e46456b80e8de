//! Green's functions of `L₀v = dv″ − cv′ + (a − λ)v + b·J∗v` and of the
//! perturbed operator `L₀ + Q`, `Qv = m·v + n·(J∗v)`.
//!
//! Everything lives on the periodic grid `ξ_j = −L_G + jh`, `j < N`, with
//! frequencies `η_m = πm/L_G`. The discrete `L₀` multiplies the `m`-th
//! Fourier mode by `Δ(iη_m)`; at the Nyquist mode it uses the mean of
//! `Δ(±iπ/h)` so that real data stay real. Inverting `L₀` is then exact
//! division by the symbol, and `G₀∗h` costs two transforms.
//!
//! The two-variable kernel `G_q` uses the quadrature of `G₀∗` with the
//! sampled table instead, so that `G_q(ξ, η) = G₀(ξ − η)` when `Q = 0`.
//!
//! The sampled `G₀` itself is built by splitting `1/Δ = 1/p + R` with
//! `p(z) = dz² − cz + (a − λ)`: the slowly decaying `1/p` is inverted in
//! closed form (a sum of one-sided exponentials, periodized exactly) and only
//! the rapidly decaying `R` goes through the discrete transform.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::charfn::{hyperbolicity_scan, CharFn};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::kernel::KernelSummary;
use crate::stats::{fit_envelope, EnvelopeFit};

/// `|G₀|` at the window edge above this means the periodic images overlap.
pub const BOUNDARY_LIMIT: f64 = 1e-6;
/// Largest side of the dense two-variable kernel.
pub const KERNEL_NODE_CAP: usize = 2049;
/// Largest accepted relative misfit of the exponential envelope.
pub const FIT_RESIDUAL_LIMIT: f64 = 0.05;
/// Largest accepted disagreement between the two one-sided extrapolants.
pub const JUMP_AGREEMENT: f64 = 1e-3;
pub const MAX_SERIES_DEPTH: usize = 400;
/// Envelope samples below this fraction of `max|G|` are round-off.
const FIT_FLOOR: f64 = 1e-12;
/// Fits and constants use `|ξ| ≤ FIT_REACH·L` to stay clear of the images.
const FIT_REACH: f64 = 0.8;
const IMAGE_MARGIN: f64 = 100.0;

fn c64(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

#[derive(Clone)]
struct Fourier {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl Fourier {
    fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            n,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        }
    }

    /// Applies the translation-invariant operator with the given symbol.
    fn apply(&self, values: &[Complex64], symbol: &[Complex64]) -> Vec<Complex64> {
        let mut buf = values[..self.n].to_vec();
        self.forward.process(&mut buf);
        let scale = 1.0 / self.n as f64;
        for (b, s) in buf.iter_mut().zip(symbol) {
            *b *= s * scale;
        }
        self.inverse.process(&mut buf);
        buf
    }

    fn apply_real(&self, values: &[f64], symbol: &[Complex64]) -> Vec<f64> {
        let buf: Vec<Complex64> = values[..self.n].iter().map(|&v| c64(v, 0.0)).collect();
        self.apply(&buf, symbol).into_iter().map(|z| z.re).collect()
    }

    /// First column of the circulant matrix with the given symbol.
    fn column(&self, symbol: &[Complex64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = symbol.iter().map(|s| s / self.n as f64).collect();
        self.inverse.process(&mut buf);
        buf
    }
}

/// Signed mode number of FFT slot `idx`.
fn mode(idx: usize, n: usize) -> i64 {
    if idx < n / 2 {
        idx as i64
    } else {
        idx as i64 - n as i64
    }
}

fn discrete_symbol(n: usize, half_width: f64, phi: impl Fn(Complex64) -> Result<Complex64>) -> Result<Vec<Complex64>> {
    (0..n)
        .map(|idx| {
            let m = mode(idx, n);
            let eta = PI * m as f64 / half_width;
            if m == -(n as i64) / 2 {
                Ok((phi(c64(0.0, eta))? + phi(c64(0.0, -eta))?) * 0.5)
            } else {
                phi(c64(0.0, eta))
            }
        })
        .collect()
}

/// Closed-form leading part of `1/Δ`.
#[derive(Debug, Clone)]
enum Leading {
    /// `1/p = Σ coeff/(z − root)`.
    Poles { shift: Complex64, poles: Vec<(Complex64, Complex64)> },
    /// `d = c = 0`: `1/Δ → 1/(a − λ)`, a point mass in `G₀`.
    Delta { weight: Complex64 },
}

impl Leading {
    fn for_charfn(cf: &CharFn) -> Result<Self> {
        let a0 = c64(cf.a, 0.0) - cf.lambda;
        if cf.d == 0.0 && cf.c == 0.0 {
            if a0.norm() == 0.0 {
                return Err(Error::Hyperbolicity {
                    eta: f64::INFINITY,
                    min_modulus: 0.0,
                });
            }
            return Ok(Leading::Delta { weight: a0.inv() });
        }
        let usable = |poles: &[(Complex64, Complex64)]| {
            poles.iter().all(|(coeff, r)| coeff.is_finite() && r.re.abs() > 1e-6 * (1.0 + r.norm()))
        };
        let poles = Self::poles(cf, a0);
        if usable(&poles) {
            return Ok(Leading::Poles { shift: a0, poles });
        }
        // The natural split puts a pole on the axis; any shift with poles off
        // the axis gives the same G₀, only the remainder decays more slowly.
        let fallback = c64(-(1.0 + a0.norm()), 0.0);
        let poles = Self::poles(cf, fallback);
        Ok(Leading::Poles { shift: fallback, poles })
    }

    fn poles(cf: &CharFn, a0: Complex64) -> Vec<(Complex64, Complex64)> {
        if cf.d == 0.0 {
            return vec![(c64(-1.0 / cf.c, 0.0), a0 / cf.c)];
        }
        let disc = (c64(cf.c * cf.c, 0.0) - a0 * (4.0 * cf.d)).sqrt();
        let r1 = (disc + cf.c) / (2.0 * cf.d);
        let r2 = (-disc + cf.c) / (2.0 * cf.d);
        let coeff = ((r1 - r2) * cf.d).inv();
        vec![(coeff, r1), (-coeff, r2)]
    }

    fn eval(&self, cf: &CharFn, z: Complex64) -> Complex64 {
        match self {
            Leading::Poles { shift, .. } => z * z * cf.d - z * cf.c + shift,
            Leading::Delta { weight } => weight.inv(),
        }
    }
}

/// Periodization over `[−L, L)` of the inverse transform of `1/(iη + k)`,
/// i.e. of `e^{−kξ}·1_{ξ>0}` (`Re k > 0`) or `−e^{−kξ}·1_{ξ<0}` (`Re k < 0`).
/// At `ξ = 0` the mean of the one-sided limits is returned.
fn periodized_pole(k: Complex64, xi: f64, half_width: f64, zero: bool) -> Complex64 {
    if k.re < 0.0 {
        return -periodized_pole(-k, -xi, half_width, zero);
    }
    let q = (-k * (2.0 * half_width)).exp();
    let denom = c64(1.0, 0.0) - q;
    if zero {
        (q + 1.0) / (denom * 2.0)
    } else if xi > 0.0 {
        (-k * xi).exp() / denom
    } else {
        (-k * (xi + 2.0 * half_width)).exp() / denom
    }
}

/// What the discontinuity at `ξ = 0` is measured in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JumpKind {
    /// `G₀(0+) − G₀(0−)`, for `d = 0`.
    Value,
    /// `G₀′(0+) − G₀′(0−)`, for `d > 0`.
    Derivative,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JumpEstimate {
    pub kind: JumpKind,
    pub jump: f64,
    pub right: f64,
    pub left: f64,
    /// Largest difference between the low- and high-order extrapolants.
    pub disagreement: f64,
    /// `1/c` for first-order operators.
    pub inverse_speed: Option<f64>,
    /// Set when `|jump − 1/c| > JUMP_AGREEMENT`.
    pub differs_from_inverse_speed: bool,
    /// Unit jump, as often quoted for this Green's function.
    pub unit_reference: Option<f64>,
}

/// Parameters of the operator a table was built from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorSummary {
    pub d: f64,
    pub c: f64,
    pub a: f64,
    pub b: f64,
    pub lambda: Complex64,
    pub kernel: KernelSummary,
}

impl OperatorSummary {
    fn of(cf: &CharFn) -> Self {
        Self {
            d: cf.d,
            c: cf.c,
            a: cf.a,
            b: cf.b,
            lambda: cf.lambda,
            kernel: cf.kernel.summary(),
        }
    }
}

/// Serializable diagnostics of a [`GreensTable`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GreensDiagnostics {
    pub grid: Grid,
    pub operator: OperatorSummary,
    /// Envelope on `ξ > 0` and `ξ < 0`; `None` when that side is round-off.
    pub decay_plus: Option<EnvelopeFit>,
    pub decay_minus: Option<EnvelopeFit>,
    /// `α̂`, the smaller of the fitted rates.
    pub alpha: Option<f64>,
    /// `C` in `|G₀(ξ)| ≤ C·e^{−α̂|ξ|}` over `|ξ| ≤ 0.8·L_G`.
    pub constant: f64,
    pub boundary_value: f64,
    pub delta_weight: Complex64,
    pub jump: Option<JumpEstimate>,
    pub jump_error: Option<String>,
}

/// Samples of `G₀` on `[−L_G, L_G]` with fit diagnostics.
#[derive(Debug, Clone)]
pub struct GreensTable {
    pub grid: Grid,
    /// `G₀(ξ_j)` for `j = 0..=N`; the last sample repeats the first.
    pub values: Vec<Complex64>,
    /// Weight of the point mass at 0 (nonzero only when `d = c = 0`); the
    /// samples hold the regular part.
    pub delta_weight: Complex64,
    pub decay_plus: Option<EnvelopeFit>,
    pub decay_minus: Option<EnvelopeFit>,
    pub alpha: Option<f64>,
    pub constant: f64,
    pub boundary_value: f64,
    pub jump: std::result::Result<JumpEstimate, String>,
    pub cf: CharFn,
    fourier: Fourier,
    /// Symbols `1/Δ`, `M` and `Δ` in FFT order.
    inverse_symbol: Vec<Complex64>,
    kernel_symbol: Vec<Complex64>,
    symbol: Vec<Complex64>,
}

impl std::fmt::Debug for Fourier {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Fourier({})", self.n)
    }
}

/// Builds `G₀` for the operator with characteristic function `cf` on
/// `[−L_G, L_G)` with `n` periodic samples (`n` a power of two).
pub fn compute_g0(cf: &CharFn, half_width: f64, n: usize) -> Result<GreensTable> {
    let table = build_table(cf, half_width, n)?;
    if table.boundary_value > BOUNDARY_LIMIT {
        return Err(Error::Window {
            boundary_value: table.boundary_value,
        });
    }
    Ok(table)
}

fn build_table(cf: &CharFn, half_width: f64, n: usize) -> Result<GreensTable> {
    if !n.is_power_of_two() || n < 16 {
        return Err(Error::Spec(format!("sample count must be a power of two and at least 16, got {n}")));
    }
    let grid = Grid::new(half_width, n)?;
    let scan = hyperbolicity_scan(cf)?;
    if !scan.hyperbolic {
        return Err(Error::Hyperbolicity {
            eta: scan.eta_at_min,
            min_modulus: scan.min_modulus,
        });
    }
    let leading = Leading::for_charfn(cf)?;
    let fourier = Fourier::new(n);
    let symbol = discrete_symbol(n, half_width, |z| cf.eval(z))?;
    let leading_symbol = discrete_symbol(n, half_width, |z| Ok(leading.eval(cf, z)))?;
    let kernel_symbol = discrete_symbol(n, half_width, |z| cf.kernel.transform(z))?;
    let inverse_symbol: Vec<Complex64> = symbol.iter().map(|s| s.inv()).collect();

    // Remainder R = 1/Δ − 1/p sampled through the discrete inverse transform:
    // G_R(ξ_j) = (2L)⁻¹ Σ_m R(iη_m) e^{iη_m ξ_j}, and e^{iη_m ξ_j} = (−1)^m e^{2πimj/N}.
    let mut buf: Vec<Complex64> = (0..n)
        .map(|idx| {
            let r = inverse_symbol[idx] - leading_symbol[idx].inv();
            if mode(idx, n) % 2 == 0 {
                r
            } else {
                -r
            }
        })
        .collect();
    fourier.inverse.process(&mut buf);
    let scale = 1.0 / (2.0 * half_width);
    let centre = grid.centre();
    let mut values: Vec<Complex64> = (0..n)
        .map(|j| {
            let xi = grid.node(j);
            let mut g = buf[j] * scale;
            if let Leading::Poles { poles, .. } = &leading {
                for (coeff, root) in poles {
                    g += coeff * periodized_pole(-root, xi, half_width, j == centre);
                }
            }
            g
        })
        .collect();
    values.push(values[0]);

    let delta_weight = match leading {
        Leading::Delta { weight } => weight,
        Leading::Poles { .. } => c64(0.0, 0.0),
    };
    let boundary_value = [values[0], values[1], values[n - 1]]
        .iter()
        .map(|v| v.norm())
        .fold(0.0, f64::max);

    let h = grid.spacing();
    let peak = values.iter().map(|v| v.norm()).fold(0.0, f64::max);
    // Periodic images of the slower tail stay below the boundary value inside
    // the fit reach; keeping the floor above it stops them bending the fit.
    let floor = (FIT_FLOOR * peak).max(IMAGE_MARGIN * boundary_value);
    let reach = FIT_REACH * half_width;
    let plus_t: Vec<f64> = (1..=n / 2).map(|k| k as f64 * h).collect();
    let plus_m: Vec<f64> = (1..=n / 2).map(|k| values[centre + k].norm()).collect();
    let minus_m: Vec<f64> = (1..=n / 2).map(|k| values[centre - k].norm()).collect();
    let decay_plus = fit_envelope(&plus_t, &plus_m, floor, reach);
    let decay_minus = fit_envelope(&plus_t, &minus_m, floor, reach);
    let alpha = [decay_plus, decay_minus]
        .iter()
        .flatten()
        .map(|f| f.rate)
        .reduce(f64::min);
    let constant = match alpha {
        Some(alpha) => grid
            .nodes()
            .iter()
            .zip(&values)
            .filter(|(x, v)| x.abs() <= reach && v.norm() > floor)
            .map(|(x, v)| v.norm() * (alpha * x.abs()).exp())
            .fold(0.0, f64::max),
        None => peak,
    };

    let mut table = GreensTable {
        grid,
        values,
        delta_weight,
        decay_plus,
        decay_minus,
        alpha,
        constant,
        boundary_value,
        jump: Err(String::new()),
        cf: cf.clone(),
        fourier,
        inverse_symbol,
        kernel_symbol,
        symbol,
    };
    table.jump = measure_jump(&table).map_err(|e| e.to_string());
    Ok(table)
}

/// Smallest half-width with `e^{−α̂L} < 1e−8`, using `α̂` from a coarse table.
/// The coarse window is widened until its own boundary values are small, so
/// that periodic images do not distort the fitted rate.
pub fn suggest_half_width(cf: &CharFn) -> Result<f64> {
    let mut half_width = 20.0;
    let coarse = loop {
        let table = build_table(cf, half_width, 4096)?;
        if table.boundary_value <= BOUNDARY_LIMIT || half_width >= 2000.0 {
            break table;
        }
        half_width *= 2.0;
    };
    Ok(match coarse.alpha {
        Some(alpha) if alpha > 0.0 => (1.25 * 8.0 * 10f64.ln() / alpha).clamp(10.0, 2000.0),
        _ => half_width,
    })
}

fn measure_jump(gt: &GreensTable) -> Result<JumpEstimate> {
    let c0 = gt.grid.centre();
    let h = gt.grid.spacing();
    let g = |k: i64| gt.values[(c0 as i64 + k) as usize].re;
    let (kind, right, left, disagreement) = if gt.cf.d == 0.0 {
        // One-sided polynomial extrapolation of G(±kh), k = 1, 2, 3, to 0.
        let side = |s: i64| {
            let (g1, g2, g3) = (g(s), g(2 * s), g(3 * s));
            let linear = 2.0 * g1 - g2;
            let quadratic = 3.0 * g1 - 3.0 * g2 + g3;
            (quadratic, (quadratic - linear).abs())
        };
        let (r, dr) = side(1);
        let (l, dl) = side(-1);
        (JumpKind::Value, r, l, dr.max(dl))
    } else {
        // One-sided difference quotients of second and third order.
        let side = |s: i64| {
            let sf = s as f64;
            let second = sf * (-3.0 * g(0) + 4.0 * g(s) - g(2 * s)) / (2.0 * h);
            let third = sf * (-11.0 * g(0) + 18.0 * g(s) - 9.0 * g(2 * s) + 2.0 * g(3 * s)) / (6.0 * h);
            (third, (third - second).abs())
        };
        let (r, dr) = side(1);
        let (l, dl) = side(-1);
        (JumpKind::Derivative, r, l, dr.max(dl))
    };
    let jump = right - left;
    if disagreement > JUMP_AGREEMENT * jump.abs().max(1.0) {
        return Err(Error::Resolution { disagreement });
    }
    let first_order = gt.cf.d == 0.0 && gt.cf.c != 0.0;
    let inverse_speed = first_order.then(|| 1.0 / gt.cf.c);
    Ok(JumpEstimate {
        kind,
        jump,
        right,
        left,
        disagreement,
        inverse_speed,
        differs_from_inverse_speed: inverse_speed.is_some_and(|v| (jump - v).abs() > JUMP_AGREEMENT),
        unit_reference: first_order.then_some(1.0),
    })
}

/// The jump of `G₀` (for `d = 0`) or of `G₀′` (for `d > 0`) at the origin,
/// measured from Richardson-extrapolated one-sided limits of the samples.
pub fn jump_at_zero(gt: &GreensTable) -> Result<f64> {
    measure_jump(gt).map(|j| j.jump)
}

impl GreensTable {
    pub fn periods(&self) -> usize {
        self.grid.intervals
    }

    pub fn is_real(&self) -> bool {
        self.cf.lambda.im == 0.0
    }

    pub fn jump_estimate(&self) -> Result<JumpEstimate> {
        measure_jump(self)
    }

    pub fn diagnostics(&self) -> GreensDiagnostics {
        GreensDiagnostics {
            grid: self.grid,
            operator: OperatorSummary::of(&self.cf),
            decay_plus: self.decay_plus,
            decay_minus: self.decay_minus,
            alpha: self.alpha,
            constant: self.constant,
            boundary_value: self.boundary_value,
            delta_weight: self.delta_weight,
            jump: self.jump.as_ref().ok().copied(),
            jump_error: self.jump.as_ref().err().cloned(),
        }
    }

    /// Two columns `ξ Re G₀`, or three with `Im G₀` for a complex shift,
    /// after a `# {json diagnostics}` header line.
    pub fn to_text(&self) -> String {
        let header = serde_json::to_string(&self.diagnostics()).expect("diagnostics serialize");
        let mut out = format!("# {header}\n");
        for (x, v) in self.grid.nodes().iter().zip(&self.values) {
            if self.is_real() {
                out.push_str(&format!("{x:.17e} {:.17e}\n", v.re));
            } else {
                out.push_str(&format!("{x:.17e} {:.17e} {:.17e}\n", v.re, v.im));
            }
        }
        out
    }

    pub fn write_text(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path.display().to_string(), e))
    }

    fn check_input(&self, grid: &Grid, len: usize) -> Result<()> {
        if grid.intervals != self.grid.intervals || !grid.same_spacing(&self.grid) {
            return Err(Error::Grid(format!(
                "data on {} intervals of width {} but the table has {} of width {}",
                grid.intervals,
                grid.spacing(),
                self.grid.intervals,
                self.grid.spacing()
            )));
        }
        if len != grid.len() {
            return Err(Error::Grid(format!("expected {} samples, got {len}", grid.len())));
        }
        if !self.is_real() {
            return Err(Error::Spec("real solves need a real spectral shift".into()));
        }
        Ok(())
    }

    fn close(mut v: Vec<f64>) -> Vec<f64> {
        v.push(v[0]);
        v
    }

    /// The discrete `L₀` applied to samples on the table's grid.
    pub fn apply_l0(&self, grid: &Grid, v: &[f64]) -> Result<Vec<f64>> {
        self.check_input(grid, v.len())?;
        Ok(Self::close(self.fourier.apply_real(v, &self.symbol)))
    }

    /// The discrete `J∗v`.
    pub fn apply_convolution(&self, grid: &Grid, v: &[f64]) -> Result<Vec<f64>> {
        self.check_input(grid, v.len())?;
        Ok(Self::close(self.fourier.apply_real(v, &self.kernel_symbol)))
    }
}

/// `v = G₀∗h`, the periodic solution of `L₀v = h` on the table's grid. The
/// last sample of `h` is taken to coincide with the first.
pub fn solve_inhomogeneous(gt: &GreensTable, grid: &Grid, h: &[f64]) -> Result<Vec<f64>> {
    gt.check_input(grid, h.len())?;
    Ok(GreensTable::close(gt.fourier.apply_real(h, &gt.inverse_symbol)))
}

/// Exponential envelope of `G_q` along `|ξ − η|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelDecay {
    pub constant: f64,
    pub nu: f64,
    /// `√(α² − 4εK₁α)` from the contraction argument.
    pub predicted_nu: f64,
    pub fit_residual: f64,
}

/// Serializable diagnostics of a [`PerturbedKernel`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesDiagnostics {
    pub depth: usize,
    pub tail_bound: f64,
    /// `‖Γ_j‖` (row-sum norm of the discrete operator) for `j = 1..`.
    pub term_norms: Vec<f64>,
    pub ratios: Vec<f64>,
    pub epsilon: f64,
    pub threshold: f64,
    pub alpha: f64,
    pub k1: f64,
    pub decay: Option<KernelDecay>,
}

/// `G_q(ξ_i, η_j)` on the grid square.
#[derive(Debug, Clone)]
pub struct PerturbedKernel {
    pub grid: Grid,
    /// Row-major `(N+1)²` samples; the last row and column repeat the first.
    pub values: Vec<f64>,
    pub series: SeriesDiagnostics,
    /// Discrete operator `(L₀ + Q)⁻¹` on the `N` periodic nodes, column-major.
    operator: Vec<Vec<f64>>,
    fourier: Fourier,
    /// Symbol of the `G₀` quadrature; its reciprocal defines the discrete `L₀`.
    green_symbol: Vec<Complex64>,
    kernel_symbol: Vec<Complex64>,
    m: Vec<f64>,
    n: Vec<f64>,
}

impl PerturbedKernel {
    pub fn side(&self) -> usize {
        self.grid.len()
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.side() + j]
    }

    /// `∫ G_q(ξ, η) h(η) dη` by the quadrature the kernel was built with.
    pub fn apply(&self, h: &[f64]) -> Vec<f64> {
        let n = self.operator.len();
        let mut out = vec![0.0; n];
        for (col, hj) in self.operator.iter().zip(h) {
            for (o, g) in out.iter_mut().zip(col) {
                *o += g * hj;
            }
        }
        GreensTable::close(out)
    }

    /// `(L₀ + Q)v` for the discrete `L₀` whose inverse is the `G₀` quadrature.
    pub fn apply_operator(&self, v: &[f64]) -> Vec<f64> {
        let inverse: Vec<Complex64> = self.green_symbol.iter().map(|s| s.inv()).collect();
        let l0 = self.fourier.apply_real(v, &inverse);
        let jv = self.fourier.apply_real(v, &self.kernel_symbol);
        let out = (0..self.operator.len())
            .map(|i| l0[i] + self.m[i] * v[i] + self.n[i] * jv[i])
            .collect();
        GreensTable::close(out)
    }

    /// `sup|(L₀ + Q)(G_q∗h) − h|`.
    pub fn residual(&self, h: &[f64]) -> f64 {
        let back = self.apply_operator(&self.apply(h));
        back.iter().zip(h).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }
}

fn row_sum_norm(columns: &[Vec<f64>]) -> f64 {
    let n = columns.first().map_or(0, |c| c.len());
    let mut sums = vec![0.0; n];
    for col in columns {
        for (s, v) in sums.iter_mut().zip(col) {
            *s += v.abs();
        }
    }
    sums.into_iter().fold(0.0, f64::max)
}

/// Kernel of `(L₀ + Q)⁻¹` by the Neumann series
/// `G_q = G₀ + Σ_j G₀∘Γ_j`, `Γ₁ = −(m·G₀ + n·J∗G₀)`, `Γ_j = Γ₁∘Γ_{j−1}`,
/// truncated once the geometric bound on the remaining terms is below `tol`.
pub fn perturbed_green(gt: &GreensTable, m: &[f64], n: &[f64], tol: f64) -> Result<PerturbedKernel> {
    let grid = gt.grid;
    if grid.len() > KERNEL_NODE_CAP {
        return Err(Error::Size {
            requested: grid.len(),
            cap: KERNEL_NODE_CAP,
        });
    }
    gt.check_input(&grid, m.len())?;
    gt.check_input(&grid, n.len())?;
    if !(tol > 0.0) {
        return Err(Error::Spec(format!("series tolerance must be positive, got {tol}")));
    }
    let np = gt.periods();
    let (m, n) = (&m[..np], &n[..np]);
    let sup = |v: &[f64]| v.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()));
    let epsilon = sup(m).max(sup(n));
    let alpha = gt
        .alpha
        .ok_or_else(|| Error::Numerical("no decay estimate for G₀; the contraction test needs one".into()))?;
    let k1 = gt.constant;
    let threshold = alpha / (4.0 * k1);
    if epsilon >= threshold {
        return Err(Error::PerturbationTooLarge { epsilon, threshold });
    }

    let fourier = &gt.fourier;
    let h = grid.spacing();
    // Quadrature of ∫G₀(ξ_i − s)v(s)ds with the sampled G₀: a circulant whose
    // first column holds h·G₀(ξ_i − ξ_0) over one period.
    let green_col: Vec<f64> = (0..np)
        .map(|k| {
            let offset = if k < np / 2 { k as i64 } else { k as i64 - np as i64 };
            let value = h * gt.values[(gt.grid.centre() as i64 + offset) as usize].re;
            if k == 0 {
                value + gt.delta_weight.re
            } else {
                value
            }
        })
        .collect();
    let green_symbol: Vec<Complex64> = {
        let mut buf: Vec<Complex64> = green_col.iter().map(|&v| c64(v, 0.0)).collect();
        fourier.forward.process(&mut buf);
        buf
    };
    let conv_symbol: Vec<Complex64> = gt
        .kernel_symbol
        .iter()
        .zip(&green_symbol)
        .map(|(k, g)| k * g)
        .collect();
    let conv_col: Vec<f64> = fourier.column(&conv_symbol).iter().map(|z| z.re).collect();
    let circ = |col: &[f64], i: usize, j: usize| col[(i + np - j) % np];

    // Γ₁ in operator form (kernel times h), column-major.
    let gamma1: Vec<Vec<f64>> = (0..np)
        .map(|j| (0..np).map(|i| -(m[i] * circ(&green_col, i, j) + n[i] * circ(&conv_col, i, j))).collect())
        .collect();
    let apply_gamma1 = |col: &[f64]| -> Vec<f64> {
        let mut buf: Vec<Complex64> = col.iter().map(|&v| c64(v, 0.0)).collect();
        fourier.forward.process(&mut buf);
        let scale = 1.0 / np as f64;
        let mut g: Vec<Complex64> = buf.iter().zip(&green_symbol).map(|(b, s)| b * s * scale).collect();
        let mut w: Vec<Complex64> = buf.iter().zip(&conv_symbol).map(|(b, s)| b * s * scale).collect();
        fourier.inverse.process(&mut g);
        fourier.inverse.process(&mut w);
        (0..np).map(|i| -(m[i] * g[i].re + n[i] * w[i].re)).collect()
    };

    let mut sum: Vec<Vec<f64>> = vec![vec![0.0; np]; np];
    let mut term = gamma1;
    let mut term_norms = Vec::new();
    let mut ratios = Vec::new();
    let mut depth = 0;
    let mut tail_factor = 0.0;
    loop {
        let norm = row_sum_norm(&term);
        if norm == 0.0 {
            break;
        }
        if let Some(prev) = term_norms.last() {
            ratios.push(norm / prev);
        }
        term_norms.push(norm);
        for (s, t) in sum.iter_mut().zip(&term) {
            for (a, b) in s.iter_mut().zip(t) {
                *a += b;
            }
        }
        depth += 1;
        if let Some(&r) = ratios.last() {
            let r = ratios.iter().rev().take(2).fold(r, |acc, &x| acc.max(x));
            if r < 1.0 {
                tail_factor = norm * r / (1.0 - r);
                if tail_factor < tol {
                    break;
                }
            } else if depth >= 8 {
                return Err(Error::Numerical(format!(
                    "Neumann series terms stopped contracting at depth {depth} (ratio {r})"
                )));
            }
        }
        if depth >= MAX_SERIES_DEPTH {
            return Err(Error::Numerical(format!(
                "Neumann series did not reach tolerance {tol:e} within {MAX_SERIES_DEPTH} terms"
            )));
        }
        term = term.iter().map(|col| apply_gamma1(col)).collect();
    }

    // (L₀ + Q)⁻¹ = G₀∗(I + Σ Γ_j).
    let operator: Vec<Vec<f64>> = sum
        .into_iter()
        .enumerate()
        .map(|(j, mut col)| {
            col[j] += 1.0;
            fourier.apply_real(&col, &green_symbol)
        })
        .collect();
    let green_norm = row_sum_norm(
        &(0..np)
            .map(|j| (0..np).map(|i| circ(&green_col, i, j)).collect::<Vec<_>>())
            .collect::<Vec<_>>(),
    );
    let tail_bound = green_norm * tail_factor;

    let side = np + 1;
    let mut values = vec![0.0; side * side];
    for i in 0..side {
        for j in 0..side {
            values[i * side + j] = operator[j % np][i % np] / h;
        }
    }

    let predicted_nu = (alpha * alpha - 4.0 * epsilon * k1 * alpha).max(0.0).sqrt();
    let decay = kernel_decay(&operator, h, grid.half_width).map(|(constant, nu, fit_residual)| KernelDecay {
        constant,
        nu,
        predicted_nu,
        fit_residual,
    });

    Ok(PerturbedKernel {
        grid,
        values,
        series: SeriesDiagnostics {
            depth,
            tail_bound,
            term_norms,
            ratios,
            epsilon,
            threshold,
            alpha,
            k1,
            decay,
        },
        operator,
        fourier: fourier.clone(),
        green_symbol,
        kernel_symbol: gt.kernel_symbol.clone(),
        m: m.to_vec(),
        n: n.to_vec(),
    })
}

/// Envelope of `max_{|i−j| = k} |G_q|` against the periodic distance `kh`.
fn kernel_decay(operator: &[Vec<f64>], h: f64, half_width: f64) -> Option<(f64, f64, f64)> {
    let np = operator.len();
    let mut env = vec![0.0_f64; np / 2 + 1];
    for (j, col) in operator.iter().enumerate() {
        for (i, v) in col.iter().enumerate() {
            let k = (i + np - j) % np;
            let k = k.min(np - k);
            env[k] = env[k].max(v.abs() / h);
        }
    }
    let peak = env.iter().copied().fold(0.0, f64::max);
    let ts: Vec<f64> = (1..env.len()).map(|k| k as f64 * h).collect();
    let fit = fit_envelope(&ts, &env[1..], FIT_FLOOR * peak, FIT_REACH * half_width)?;
    let constant = ts
        .iter()
        .zip(&env[1..])
        .filter(|(t, e)| **t <= FIT_REACH * half_width && **e > FIT_FLOOR * peak)
        .map(|(t, e)| e * (fit.rate * t).exp())
        .fold(env[0], f64::max);
    Some((constant, fit.rate, fit.fit_residual))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Convolution;
    use crate::kernel::KernelSpec;

    fn gauss() -> KernelSpec {
        KernelSpec::gaussian(1.0).unwrap()
    }

    #[test]
    fn helmholtz_green_function() {
        let cf = CharFn::new(1.0, 0.0, -1.0, 0.0, gauss());
        let gt = compute_g0(&cf, 30.0, 4096).unwrap();
        for (x, v) in gt.grid.nodes().iter().zip(&gt.values) {
            assert!((v.re + 0.5 * (-x.abs()).exp()).abs() < 1e-10, "{x} {v}");
            assert!(v.im.abs() < 1e-14);
        }
        assert!((gt.alpha.unwrap() - 1.0).abs() < 1e-3);
        let jump = gt.jump_estimate().unwrap();
        assert_eq!(jump.kind, JumpKind::Derivative);
        assert!((jump.jump - 1.0).abs() < 1e-3, "{jump:?}");
    }

    #[test]
    fn first_order_green_function_and_jump() {
        let cf = CharFn::new(0.0, 1.0, -1.0, 0.0, gauss());
        let gt = compute_g0(&cf, 30.0, 4096).unwrap();
        let c0 = gt.grid.centre();
        for (k, (x, v)) in gt.grid.nodes().iter().zip(&gt.values).enumerate() {
            let exact = if k > c0 {
                -(-x).exp()
            } else if k == c0 {
                -0.5
            } else {
                0.0
            };
            assert!((v.re - exact).abs() < 1e-10, "{x} {v}");
        }
        // Quadratic extrapolation from three samples carries an O(h³) error.
        assert!((jump_at_zero(&gt).unwrap() + 1.0).abs() < 1e-4);
        assert!(gt.decay_minus.is_none());

        let cf = CharFn::new(0.0, 2.0, -1.0, 0.0, gauss());
        let gt = compute_g0(&cf, 40.0, 4096).unwrap();
        let jump = gt.jump_estimate().unwrap();
        assert!((jump.jump + 0.5).abs() < 1e-6, "{jump:?}");
        assert!(jump.differs_from_inverse_speed);
        assert_eq!(jump.inverse_speed, Some(0.5));
    }

    /// Away from the origin `G₀` solves the homogeneous equation; check it with
    /// centered differences and the direct-sum convolution.
    #[test]
    fn nonlocal_green_function_solves_homogeneous_equation() {
        for (d, c) in [(0.0, 1.0), (0.5, -0.7), (1.0, 0.0)] {
            let cf = CharFn::new(d, c, -2.0, 1.0, gauss());
            let gt = compute_g0(&cf, 40.0, 8192).unwrap();
            let g: Vec<f64> = gt.values.iter().map(|v| v.re).collect();
            assert!(gt.values.iter().all(|v| v.im.abs() < 1e-12));
            let h = gt.grid.spacing();
            let conv = Convolution::homogeneous(&cf.kernel, gt.grid);
            let jg = conv.apply_direct(&g);
            let c0 = gt.grid.centre();
            let reach = conv.reach();
            let mut worst = 0.0_f64;
            for i in reach + 1..gt.grid.len() - reach - 1 {
                if (i as i64 - c0 as i64).abs() < 8 {
                    continue;
                }
                let d1 = (g[i + 1] - g[i - 1]) / (2.0 * h);
                let d2 = (g[i + 1] - 2.0 * g[i] + g[i - 1]) / (h * h);
                let r = d * d2 - c * d1 + cf.a * g[i] + cf.b * jg[i];
                worst = worst.max(r.abs());
            }
            assert!(worst < 2e-4, "d={d} c={c}: {worst}");
            assert!(gt.alpha.unwrap() > 0.0);
        }
    }

    #[test]
    fn point_mass_part_for_zero_order_operator() {
        let cf = CharFn::new(0.0, 0.0, -2.0, 1.0, gauss());
        let gt = compute_g0(&cf, 30.0, 2048).unwrap();
        assert!((gt.delta_weight.re + 0.5).abs() < 1e-15);
        let grid = gt.grid;
        let rhs: Vec<f64> = grid.nodes().iter().map(|x| (-x * x).exp()).collect();
        let v = solve_inhomogeneous(&gt, &grid, &rhs).unwrap();
        let back = gt.apply_l0(&grid, &v).unwrap();
        for (a, b) in back.iter().zip(&rhs) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn narrow_window_is_rejected() {
        let cf = CharFn::new(0.0, 1.0, -0.05, 0.0, gauss());
        assert!(matches!(compute_g0(&cf, 20.0, 1024), Err(Error::Window { .. })));
        let l = suggest_half_width(&cf).unwrap();
        assert!(compute_g0(&cf, l, 8192).is_ok(), "{l}");
    }

    #[test]
    fn non_hyperbolic_operator_is_rejected() {
        let cf = CharFn::new(0.0, 1.0, -1.0, 1.0, gauss());
        assert!(matches!(compute_g0(&cf, 20.0, 1024), Err(Error::Hyperbolicity { .. })));
        let cf = CharFn::new(0.0, 1.0, -1.0, 0.0, gauss());
        assert!(matches!(compute_g0(&cf, 20.0, 1000), Err(Error::Spec(_))));
    }

    #[test]
    fn coarse_grid_fails_jump_resolution() {
        let cf = CharFn::new(0.0, 0.05, -1.0, 0.0, gauss());
        let gt = compute_g0(&cf, 20.0, 256).unwrap();
        assert!(matches!(jump_at_zero(&gt), Err(Error::Resolution { .. })));
    }

    #[test]
    fn zero_rhs_and_incompatible_grids() {
        let cf = CharFn::new(1.0, 0.3, -1.0, 0.5, gauss());
        let gt = compute_g0(&cf, 30.0, 1024).unwrap();
        let v = solve_inhomogeneous(&gt, &gt.grid, &vec![0.0; gt.grid.len()]).unwrap();
        assert!(v.iter().all(|x| *x == 0.0));
        let other = Grid::new(30.0, 512).unwrap();
        assert!(matches!(
            solve_inhomogeneous(&gt, &other, &vec![0.0; other.len()]),
            Err(Error::Grid(_))
        ));
    }

    #[test]
    fn unperturbed_kernel_is_the_translate() {
        let cf = CharFn::new(0.0, 1.0, -2.0, 1.0, gauss());
        let gt = compute_g0(&cf, 20.0, 256).unwrap();
        let zeros = vec![0.0; gt.grid.len()];
        let pk = perturbed_green(&gt, &zeros, &zeros, 1e-10).unwrap();
        assert_eq!(pk.series.depth, 0);
        let np = gt.periods();
        for i in 0..=np {
            for j in 0..=np {
                let offset = (i % np) as i64 - (j % np) as i64;
                let wrapped = (offset + 3 * np as i64 / 2).rem_euclid(np as i64) - np as i64 / 2;
                let expected = gt.values[(gt.grid.centre() as i64 + wrapped) as usize].re;
                assert!((pk.at(i, j) - expected).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn kernel_size_cap_and_contraction_failure() {
        let cf = CharFn::new(0.0, 1.0, -2.0, 1.0, gauss());
        let gt = compute_g0(&cf, 40.0, 4096).unwrap();
        let zeros = vec![0.0; gt.grid.len()];
        assert!(matches!(
            perturbed_green(&gt, &zeros, &zeros, 1e-8),
            Err(Error::Size { .. })
        ));
        let gt = compute_g0(&cf, 40.0, 512).unwrap();
        let zeros = vec![0.0; gt.grid.len()];
        let big = vec![1.0; gt.grid.len()];
        assert!(matches!(
            perturbed_green(&gt, &big, &zeros, 1e-8),
            Err(Error::PerturbationTooLarge { .. })
        ));
    }

    #[test]
    fn perturbed_solve_residual() {
        let cf = CharFn::new(0.0, 1.0, -2.0, 1.0, gauss());
        let gt = compute_g0(&cf, 40.0, 1024).unwrap();
        let grid = gt.grid;
        let eps = 0.5 * gt.alpha.unwrap() / (4.0 * gt.constant);
        let m: Vec<f64> = grid.nodes().iter().map(|&x| if x < 0.0 { eps } else { 0.0 }).collect();
        let zeros = vec![0.0; grid.len()];
        let tol = 1e-8;
        let pk = perturbed_green(&gt, &m, &zeros, tol).unwrap();
        assert!(pk.series.ratios.iter().all(|r| *r < 1.0), "{:?}", pk.series.ratios);
        let rhs: Vec<f64> = grid.nodes().iter().map(|x| (-x * x).exp()).collect();
        let res = pk.residual(&rhs);
        assert!(res < 10.0 * tol, "{res}");
        assert!(pk.series.tail_bound < tol);
    }

    #[test]
    fn perturbed_kernel_decay_matches_contraction_rate() {
        let cf = CharFn::new(0.0, 1.0, -2.0, 1.0, gauss());
        let gt = compute_g0(&cf, 40.0, 1024).unwrap();
        let grid = gt.grid;
        let eps = 0.1 * gt.alpha.unwrap() / (4.0 * gt.constant);
        let m: Vec<f64> = grid.nodes().iter().map(|&x| if x < 0.0 { eps } else { 0.0 }).collect();
        let zeros = vec![0.0; grid.len()];
        let pk = perturbed_green(&gt, &m, &zeros, 1e-10).unwrap();
        let decay = pk.series.decay.unwrap();
        assert!(decay.nu > 0.0);
        assert!(((decay.nu - decay.predicted_nu) / decay.predicted_nu).abs() < 0.25, "{decay:?}");
    }
}
