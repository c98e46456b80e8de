//! Tail rates and amplitudes of computed waves compared with the real roots
//! of the limiting characteristic functions.

use serde::{Deserialize, Serialize};

use crate::charfn::{real_roots, CharFn, RootPair};
use crate::error::{Error, Result};
use crate::grid::{interpolate_uniform, Convolution};
use crate::model::{ModelProblem, Side};
use crate::stats::linear_fit;
use crate::wave::{solve_wave, SolverConfig, WaveSolution};

pub const R_SQUARED_THRESHOLD: f64 = 0.999;
/// Values of `1 ∓ U` below this are treated as round-off.
pub const UNDERFLOW_FLOOR: f64 = 1e-14;
/// Half-width of the excluded core.
pub const CORE_EXCLUSION: f64 = 5.0;
/// Fraction of the domain next to each boundary excluded from fits.
pub const OUTER_EXCLUSION: f64 = 0.1;
pub const SPEED_AGREEMENT: f64 = 1e-6;
pub const PROFILE_AGREEMENT: f64 = 1e-5;

/// Exponents of the two tails predicted from the limiting operators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictedRates {
    /// Negative root of `Δ_{L₊}`: `1 − U ~ D₁e^{λ^s₊ ξ}` as `ξ → ∞`.
    pub lambda_s_plus: f64,
    /// Positive root of `Δ_{L₋}`: `U + 1 ~ D₂e^{λ^u₋ ξ}` as `ξ → −∞`.
    pub lambda_u_minus: f64,
    pub roots_plus: RootPair,
    pub roots_minus: RootPair,
}

impl PredictedRates {
    pub fn rate(&self, side: Side) -> f64 {
        match side {
            Side::PlusInfinity => self.lambda_s_plus,
            Side::MinusInfinity => self.lambda_u_minus,
        }
    }
}

pub fn predicted_rates(problem: &ModelProblem, c: f64) -> Result<PredictedRates> {
    let roots_plus = real_roots(&CharFn::for_side(problem, c, Side::PlusInfinity))?;
    let roots_minus = real_roots(&CharFn::for_side(problem, c, Side::MinusInfinity))?;
    Ok(PredictedRates {
        lambda_s_plus: roots_plus.lambda_s,
        lambda_u_minus: roots_minus.lambda_u,
        roots_plus,
        roots_minus,
    })
}

/// `|ξ|` range used for a tail fit; the minus side uses `[−hi, −lo]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitWindow {
    pub lo: f64,
    pub hi: f64,
}

impl FitWindow {
    pub fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    /// `[0.3L, 0.8L]`.
    pub fn default_for(half_width: f64) -> Self {
        Self::new(0.3 * half_width, 0.8 * half_width)
    }

    /// The window as signed `ξ` bounds on the given side.
    pub fn on_side(&self, side: Side) -> (f64, f64) {
        match side {
            Side::PlusInfinity => (self.lo, self.hi),
            Side::MinusInfinity => (-self.hi, -self.lo),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub side: Side,
    pub rate: f64,
    /// `D₁` or `D₂`.
    pub amplitude: f64,
    /// Signed `ξ` bounds of the fitted samples.
    pub window: (f64, f64),
    pub samples: usize,
    pub r_squared: f64,
    pub r_squared_threshold: f64,
    pub predicted_rate: Option<f64>,
    pub relative_error: Option<f64>,
}

/// Window policy: at least 3 samples, clear of the core and of the outer
/// tenth of the grid.
fn check_window(wave: &WaveSolution, window: FitWindow) -> Result<()> {
    let limit = (1.0 - OUTER_EXCLUSION) * wave.grid.half_width;
    let violation = |reason: String| Error::WindowPolicy {
        lo: window.lo,
        hi: window.hi,
        reason,
    };
    if !(window.lo < window.hi) {
        return Err(violation("empty window".into()));
    }
    if window.lo < CORE_EXCLUSION {
        return Err(violation(format!("reaches into the core |ξ| < {CORE_EXCLUSION}")));
    }
    if window.hi > limit + 1e-12 {
        return Err(violation(format!(
            "reaches into the outer {:.0}% of the grid (|ξ| > {limit})",
            100.0 * OUTER_EXCLUSION
        )));
    }
    Ok(())
}

/// Samples `(ξ, y)` on the window of one tail.
fn window_samples(wave: &WaveSolution, side: Side, window: FitWindow, values: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let (a, b) = window.on_side(side);
    let h = wave.spacing();
    wave.xi()
        .into_iter()
        .zip(values.iter().copied())
        .filter(|(x, _)| *x >= a - 1e-9 * h && *x <= b + 1e-9 * h)
        .unzip()
}

/// Least-squares line through `log(1 − U)` (plus side) or `log(U + 1)`
/// (minus side) on the window.
pub fn fit_tail_rate(wave: &WaveSolution, side: Side, window: FitWindow) -> Result<DecayFit> {
    let gap: Vec<f64> = wave.u.iter().map(|u| (u - side.state()).abs()).collect();
    fit_exponential(wave, side, window, &gap)
}

/// The same fit applied to `U′`, whose tail is `γ e^{λξ}`.
pub fn fit_derivative_tail(wave: &WaveSolution, side: Side, window: FitWindow) -> Result<DecayFit> {
    fit_exponential(wave, side, window, &wave.derivative())
}

fn fit_exponential(wave: &WaveSolution, side: Side, window: FitWindow, values: &[f64]) -> Result<DecayFit> {
    let (xs, ys) = window_samples(wave, side, window, values);
    if xs.len() < 3 {
        return Err(Error::WindowPolicy {
            lo: window.lo,
            hi: window.hi,
            reason: format!("only {} grid points inside", xs.len()),
        });
    }
    if let Some(k) = ys.iter().position(|&y| !(y >= UNDERFLOW_FLOOR)) {
        return Err(Error::UnderflowWindow { value: ys[k], at: xs[k] });
    }
    let logs: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let fit = linear_fit(&xs, &logs);
    if !(fit.r_squared >= R_SQUARED_THRESHOLD) {
        return Err(Error::FitQuality {
            r_squared: fit.r_squared,
            threshold: R_SQUARED_THRESHOLD,
        });
    }
    check_window(wave, window)?;
    Ok(DecayFit {
        side,
        rate: fit.slope,
        amplitude: fit.intercept.exp(),
        window: (xs[0], xs[xs.len() - 1]),
        samples: xs.len(),
        r_squared: fit.r_squared,
        r_squared_threshold: R_SQUARED_THRESHOLD,
        predicted_rate: None,
        relative_error: None,
    })
}

impl DecayFit {
    pub fn with_prediction(mut self, predicted: f64) -> Self {
        self.predicted_rate = Some(predicted);
        self.relative_error = Some(((self.rate - predicted) / predicted).abs());
        self
    }
}

/// Fits both tails and attaches the predicted exponents.
pub fn compare_rates(problem: &ModelProblem, wave: &WaveSolution, window: FitWindow) -> Result<(PredictedRates, [DecayFit; 2])> {
    let predicted = predicted_rates(problem, wave.c)?;
    let plus = fit_tail_rate(wave, Side::PlusInfinity, window)?.with_prediction(predicted.lambda_s_plus);
    let minus = fit_tail_rate(wave, Side::MinusInfinity, window)?.with_prediction(predicted.lambda_u_minus);
    Ok((predicted, [plus, minus]))
}

/// Amplitude `γ` of `U′ ~ γe^{λξ}` obtained as the residue of `ĥ/Δ` at the
/// tail exponent `λ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidueAmplitude {
    pub side: Side,
    /// Tail exponent `λ^s₊` or `λ^u₋`.
    pub exponent: f64,
    pub gamma: f64,
    /// `∫ h(η) e^{−λη} dη`.
    pub numerator: f64,
    /// `Δ′(λ)`.
    pub delta_prime: f64,
    /// `∫ ηJ(η) e^{−λη} dη − c`, the form without the factor `b`.
    pub printed_denominator: f64,
    /// `−Δ′(λ) / printed_denominator`; equals `b` when `d = 0` and `c = 0`.
    pub denominator_ratio: f64,
    pub b: f64,
    /// Amplitude of `1 ∓ U` implied by `γ`: `D = |γ/λ|`.
    pub implied_amplitude: f64,
    /// Set when the exponential weight had to be clipped to stay finite.
    pub warning: Option<String>,
}

/// `γ` from the wave: `h = −[(f_r(U, J*U) − a)V + (f_s(U, J*U) − b)J*V]` with
/// `V = U′`, and `γ⁺ = ĥ(λ^s₊)/Δ′₊(λ^s₊)`, `γ⁻ = −ĥ(λ^u₋)/Δ′₋(λ^u₋)`.
pub fn residue_amplitude(problem: &ModelProblem, wave: &WaveSolution, side: Side) -> Result<ResidueAmplitude> {
    let cf = CharFn::for_side(problem, wave.c, side);
    let roots = real_roots(&cf)?;
    let lambda = match side {
        Side::PlusInfinity => roots.lambda_s,
        Side::MinusInfinity => roots.lambda_u,
    };
    let (a, b) = (cf.a, cf.b);
    let f = problem.nonlinearity();
    let v = wave.derivative();
    let ju = Convolution::for_wave(problem.kernel(), wave.grid).apply(&wave.u);
    let jv = Convolution::homogeneous(problem.kernel(), wave.grid).apply(&v);
    let h = wave.spacing();
    let xs = wave.xi();
    let n = xs.len();
    let mut warning = None;
    let mut numerator = 0.0;
    for i in 0..n {
        let hi = -((f.f_r(wave.u[i], ju[i]) - a) * v[i] + (f.f_s(wave.u[i], ju[i]) - b) * jv[i]);
        let exponent = -lambda * xs[i];
        if exponent > 700.0 {
            warning.get_or_insert_with(|| format!("weight clipped beyond ξ = {}", xs[i]));
            continue;
        }
        let w = if i == 0 || i + 1 == n { 0.5 * h } else { h };
        numerator += w * hi * exponent.exp();
    }
    let z = num_complex::Complex64::new(lambda, 0.0);
    let delta_prime = cf.eval_prime(z)?.re;
    let printed_denominator = problem.kernel().moment_transform(z)?.re - wave.c;
    let gamma = match side {
        Side::PlusInfinity => numerator / delta_prime,
        Side::MinusInfinity => -numerator / delta_prime,
    };
    Ok(ResidueAmplitude {
        side,
        exponent: lambda,
        gamma,
        numerator,
        delta_prime,
        printed_denominator,
        denominator_ratio: -delta_prime / printed_denominator,
        b,
        implied_amplitude: (gamma / lambda).abs(),
        warning,
    })
}

/// Pairwise agreement of several solves of the same problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniquenessReport {
    pub speeds: Vec<f64>,
    pub speed_spread: f64,
    /// Largest sup-norm gap between aligned profiles.
    pub profile_spread: f64,
    /// `(i, j, |c_i − c_j|, profile gap)`.
    pub pairs: Vec<(usize, usize, f64, f64)>,
    /// Half-width of the window on which profiles were compared.
    pub window: f64,
    pub speed_tolerance: f64,
    pub profile_tolerance: f64,
}

/// Solves with every config and compares speeds and profiles after
/// translating each so that it crosses the first run's phase value at 0.
pub fn uniqueness_check(problem: &ModelProblem, configs: &[(SolverConfig, Option<WaveSolution>)]) -> Result<UniquenessReport> {
    if configs.len() < 2 {
        return Err(Error::Spec("uniqueness check needs at least two configurations".into()));
    }
    let waves = configs
        .iter()
        .map(|(cfg, init)| solve_wave(problem, cfg, init.as_ref()))
        .collect::<Result<Vec<_>>>()?;
    compare_waves(&waves)
}

/// The comparison part of [`uniqueness_check`] for already solved waves.
pub fn compare_waves(waves: &[WaveSolution]) -> Result<UniquenessReport> {
    let level = waves[0].phase.value;
    let shifts = waves
        .iter()
        .map(|w| crossing(w, level))
        .collect::<Result<Vec<_>>>()?;
    let min_half = waves.iter().map(|w| w.grid.half_width).fold(f64::INFINITY, f64::min);
    let max_shift = shifts.iter().fold(0.0_f64, |m, s| m.max(s.abs()));
    let window = 0.8 * min_half - max_shift;
    let finest = waves
        .iter()
        .map(|w| w.spacing())
        .fold(f64::INFINITY, f64::min);
    let samples = (2.0 * window / finest).ceil() as usize;
    let mut pairs = Vec::new();
    let (mut speed_spread, mut profile_spread) = (0.0_f64, 0.0_f64);
    for i in 0..waves.len() {
        for j in i + 1..waves.len() {
            let dc = (waves[i].c - waves[j].c).abs();
            let mut gap = 0.0_f64;
            for k in 0..=samples {
                let x = -window + 2.0 * window * k as f64 / samples as f64;
                let ui = interpolate_uniform(&waves[i].grid, &waves[i].u, x + shifts[i]);
                let uj = interpolate_uniform(&waves[j].grid, &waves[j].u, x + shifts[j]);
                gap = gap.max((ui - uj).abs());
            }
            speed_spread = speed_spread.max(dc);
            profile_spread = profile_spread.max(gap);
            pairs.push((i, j, dc, gap));
        }
    }
    let report = UniquenessReport {
        speeds: waves.iter().map(|w| w.c).collect(),
        speed_spread,
        profile_spread,
        pairs,
        window,
        speed_tolerance: SPEED_AGREEMENT,
        profile_tolerance: PROFILE_AGREEMENT,
    };
    if speed_spread > SPEED_AGREEMENT || profile_spread > PROFILE_AGREEMENT {
        return Err(Error::NonUnique {
            speed_spread,
            profile_spread,
        });
    }
    Ok(report)
}

/// `ξ` with `U(ξ) = level`, by bisection on the interpolated profile.
fn crossing(wave: &WaveSolution, level: f64) -> Result<f64> {
    let k = wave
        .u
        .windows(2)
        .position(|w| w[0] <= level && w[1] > level)
        .ok_or_else(|| Error::Numerical(format!("profile never crosses {level}")))?;
    let (mut lo, mut hi) = (wave.grid.node(k), wave.grid.node(k + 1));
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if interpolate_uniform(&wave.grid, &wave.u, mid) <= level {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// `(ξ, log|1 ∓ U|)` rows for one tail, for plotting.
pub fn tail_table(wave: &WaveSolution, side: Side) -> String {
    let mut out = String::new();
    for (x, u) in wave.xi().iter().zip(&wave.u) {
        let on_side = match side {
            Side::PlusInfinity => *x >= 0.0,
            Side::MinusInfinity => *x <= 0.0,
        };
        let gap = (u - side.state()).abs();
        if on_side && gap > 0.0 {
            out.push_str(&format!("{x:.10e} {:.10e}\n", gap.ln()));
        }
    }
    out
}

/// Rough size of the error caused by replacing `U` with `±1` outside the
/// grid: the tail value at the boundary, `max(D₁e^{λ^s₊L}, D₂e^{−λ^u₋L})`.
pub fn truncation_estimate(fits: &[DecayFit], half_width: f64) -> f64 {
    fits.iter()
        .map(|f| f.amplitude * (-(f.rate.abs()) * half_width).exp())
        .fold(0.0, f64::max)
}
