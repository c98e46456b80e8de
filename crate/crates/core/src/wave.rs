//! Traveling waves `(c, U)` of `cU′ = dU″ + f(U, J*U)`, `U(±∞) = ±1`.
//!
//! The profile is sampled on every node of a uniform grid on `[−L, L]`;
//! stencils and the convolution see `U = −1` below the grid and `U = +1`
//! above it. Translation invariance is removed by pinning `U(0) = u₀`, which
//! makes the speed `c` an extra unknown. The system is solved by damped
//! Newton with a dense Jacobian.

use std::path::Path;

use faer::prelude::*;
use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::error::{Error, NewtonStep, Result};
use crate::grid::{interpolate, Convolution, Grid};
use crate::model::ModelProblem;

pub const MIN_INTERVALS: usize = 128;
pub const MAX_NODES: usize = 8193;
pub const MIN_HALF_WIDTH: f64 = 10.0;
/// Slack allowed on `−1 ≤ U ≤ 1`.
pub const RANGE_SLACK: f64 = 1e-8;
/// Distance from `±1` below which a sample is at round-off level.
pub const SATURATION: f64 = 1e-13;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    /// Half-width `L` of the truncated domain.
    pub half_width: f64,
    /// Number of grid intervals `n` (even).
    pub intervals: usize,
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Smallest Newton damping factor tried before giving up.
    pub min_damping: f64,
    /// Phase value `u₀` in `U(0) = u₀`; the middle zero `q` when absent.
    pub phase_value: Option<f64>,
    /// Width `w` of the default initial guess `tanh(ξ/w)`.
    pub initial_width: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            half_width: 40.0,
            intervals: 2048,
            tolerance: 1e-10,
            max_iterations: 50,
            min_damping: 1.0 / 1024.0 / 1024.0,
            phase_value: None,
            initial_width: 2.0,
        }
    }
}

impl SolverConfig {
    pub fn with_grid(half_width: f64, intervals: usize) -> Self {
        Self {
            half_width,
            intervals,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<Grid> {
        if self.intervals < MIN_INTERVALS {
            return Err(Error::Spec(format!(
                "n = {} is below the minimum {MIN_INTERVALS}",
                self.intervals
            )));
        }
        if self.intervals + 1 > MAX_NODES {
            return Err(Error::Size {
                requested: self.intervals + 1,
                cap: MAX_NODES,
            });
        }
        if !(self.half_width >= MIN_HALF_WIDTH) {
            return Err(Error::Spec(format!(
                "L = {} is below the minimum {MIN_HALF_WIDTH}",
                self.half_width
            )));
        }
        if !(self.tolerance > 0.0) || self.max_iterations == 0 || !(self.min_damping > 0.0 && self.min_damping <= 1.0) {
            return Err(Error::Spec("tolerance, max_iterations and min_damping must be positive".into()));
        }
        if !(self.initial_width > 0.0) {
            return Err(Error::Spec("initial_width must be positive".into()));
        }
        if let Some(u0) = self.phase_value {
            if !(u0 > -1.0 && u0 < 1.0) {
                return Err(Error::Spec(format!("phase value {u0} must lie in (-1, 1)")));
            }
        }
        Grid::new(self.half_width, self.intervals)
    }
}

/// The pinning condition `U(ξ_node) = value`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseCondition {
    pub node: usize,
    pub xi: f64,
    pub value: f64,
}

/// First-derivative stencil.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Advection {
    /// `(U_{i+1} − U_{i−1})/2h`, used when `d > 0`.
    Centered,
    /// `(U_i − U_{i−1})/h` for `c ≥ 0`, `(U_{i+1} − U_i)/h` for `c < 0`.
    Upwind,
}

impl Advection {
    pub fn for_diffusion(d: f64) -> Self {
        if d > 0.0 {
            Advection::Centered
        } else {
            Advection::Upwind
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveSolution {
    pub grid: Grid,
    pub u: Vec<f64>,
    pub c: f64,
    pub d: f64,
    pub advection: Advection,
    pub phase: PhaseCondition,
    /// Sup norm of the discretized equation at the returned iterate.
    pub residual: f64,
    pub tolerance: f64,
    pub monotone: bool,
    pub min_slope: f64,
    /// `max(|U(−L) + 1|, |U(L) − 1|)`.
    pub boundary_deviation: f64,
    pub iterations: usize,
    pub trace: Vec<NewtonStep>,
}

/// Everything in a [`WaveSolution`] except the samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveHeader {
    pub c: f64,
    pub d: f64,
    pub residual: f64,
    pub tolerance: f64,
    pub grid: Grid,
    pub advection: Advection,
    pub phase: PhaseCondition,
    pub monotone: bool,
    pub min_slope: f64,
    pub boundary_deviation: f64,
    pub iterations: usize,
}

impl WaveSolution {
    pub fn xi(&self) -> Vec<f64> {
        self.grid.nodes()
    }

    pub fn spacing(&self) -> f64 {
        self.grid.spacing()
    }

    pub fn header(&self) -> WaveHeader {
        WaveHeader {
            c: self.c,
            d: self.d,
            residual: self.residual,
            tolerance: self.tolerance,
            grid: self.grid,
            advection: self.advection,
            phase: self.phase,
            monotone: self.monotone,
            min_slope: self.min_slope,
            boundary_deviation: self.boundary_deviation,
            iterations: self.iterations,
        }
    }

    /// `U′` by centered differences (one-sided at the ends, using the
    /// boundary constants).
    pub fn derivative(&self) -> Vec<f64> {
        let h = self.spacing();
        let n = self.u.len();
        (0..n)
            .map(|i| {
                let left = if i == 0 { -1.0 } else { self.u[i - 1] };
                let right = if i + 1 == n { 1.0 } else { self.u[i + 1] };
                (right - left) / (2.0 * h)
            })
            .collect()
    }

    /// Two-column `ξ U` text preceded by a `#` line holding the JSON header.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str("# ");
        out.push_str(&serde_json::to_string(&self.header()).expect("header serializes"));
        out.push('\n');
        for (x, u) in self.xi().iter().zip(&self.u) {
            out.push_str(&format!("{x:.17e} {u:.17e}\n"));
        }
        out
    }

    pub fn write_text(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path.display().to_string(), e))
    }

    /// Reads a profile written by [`WaveSolution::to_text`], or any uniform
    /// two-column `ξ U` table (then `c = 0` and no residual is known).
    pub fn from_text(text: &str) -> Result<Self> {
        let mut header: Option<WaveHeader> = None;
        let mut xs = Vec::new();
        let mut us = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let trimmed = line.trim();
            if let Some(rest) = trimmed.strip_prefix('#') {
                let rest = rest.trim();
                if header.is_none() && rest.starts_with('{') {
                    header = Some(
                        serde_json::from_str(rest)
                            .map_err(|e| Error::Parse(format!("wave header: {e}")))?,
                    );
                }
                continue;
            }
            if trimmed.is_empty() {
                continue;
            }
            let cols: Vec<&str> = trimmed.split_whitespace().collect();
            if cols.len() != 2 {
                return Err(Error::Parse(format!("wave file line {}: expected two columns", lineno + 1)));
            }
            let parse = |s: &str| {
                s.parse::<f64>()
                    .map_err(|e| Error::Parse(format!("wave file line {}: {e}", lineno + 1)))
            };
            xs.push(parse(cols[0])?);
            us.push(parse(cols[1])?);
        }
        if xs.len() < 3 {
            return Err(Error::Parse("wave file holds fewer than 3 samples".into()));
        }
        let half_width = -xs[0];
        let intervals = xs.len() - 1;
        if (xs[intervals] - half_width).abs() > 1e-9 * half_width.abs().max(1.0) {
            return Err(Error::Grid("wave samples must cover a symmetric interval [-L, L]".into()));
        }
        let grid = Grid::new(half_width, intervals)?;
        let h = grid.spacing();
        if xs.iter().enumerate().any(|(i, x)| (x - grid.node(i)).abs() > 1e-9 * h.max(1.0)) {
            return Err(Error::Grid("wave samples are not uniformly spaced".into()));
        }
        let (min_slope, boundary_deviation) = profile_shape(&us);
        Ok(match header {
            Some(hd) => WaveSolution {
                grid,
                u: us,
                c: hd.c,
                d: hd.d,
                advection: hd.advection,
                phase: hd.phase,
                residual: hd.residual,
                tolerance: hd.tolerance,
                monotone: min_slope > 0.0,
                min_slope,
                boundary_deviation,
                iterations: hd.iterations,
                trace: Vec::new(),
            },
            None => {
                let node = grid.centre();
                WaveSolution {
                    grid,
                    phase: PhaseCondition {
                        node,
                        xi: 0.0,
                        value: us[node],
                    },
                    u: us,
                    c: 0.0,
                    d: 0.0,
                    advection: Advection::Upwind,
                    residual: f64::NAN,
                    tolerance: f64::NAN,
                    monotone: min_slope > 0.0,
                    min_slope,
                    boundary_deviation,
                    iterations: 0,
                    trace: Vec::new(),
                }
            }
        })
    }

    pub fn read_text(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        Self::from_text(&text)
    }

    /// The profile on another grid by linear interpolation, `∓1` outside.
    pub fn resample(&self, grid: &Grid) -> Vec<f64> {
        let xs = self.xi();
        let (lo, hi) = (xs[0], xs[xs.len() - 1]);
        grid.nodes()
            .into_iter()
            .map(|x| {
                if x < lo {
                    -1.0
                } else if x > hi {
                    1.0
                } else {
                    interpolate(&xs, &self.u, x)
                }
            })
            .collect()
    }
}

/// Smallest discrete slope where the profile is resolvable, and the boundary
/// deviation. Samples within `SATURATION` of `±1` carry no slope information
/// in double precision; steps between two of them only have to stay above
/// `−SATURATION`, and a violation there is reported as that (negative) step.
fn profile_shape(u: &[f64]) -> (f64, f64) {
    let saturated = |x: f64| (1.0 - x).min(x + 1.0) < SATURATION;
    let min_slope = u
        .windows(2)
        .map(|w| {
            let step = w[1] - w[0];
            if saturated(w[0]) && saturated(w[1]) && step > -SATURATION {
                f64::INFINITY
            } else {
                step
            }
        })
        .fold(f64::INFINITY, f64::min);
    let boundary = (u[0] + 1.0).abs().max((u[u.len() - 1] - 1.0).abs());
    (min_slope, boundary)
}

/// Discretized equation and its Jacobian on a fixed grid.
struct System<'a> {
    problem: &'a ModelProblem,
    grid: Grid,
    conv: Convolution,
    advection: Advection,
    phase: PhaseCondition,
}

impl<'a> System<'a> {
    fn new(problem: &'a ModelProblem, grid: Grid, phase_value: f64) -> Self {
        let node = grid.centre();
        Self {
            problem,
            grid,
            conv: Convolution::for_wave(problem.kernel(), grid),
            advection: Advection::for_diffusion(problem.d()),
            phase: PhaseCondition {
                node,
                xi: grid.node(node),
                value: phase_value,
            },
        }
    }

    /// First-difference coefficients `(left, centre, right)` for speed `c`.
    fn first_difference(&self, c: f64) -> (f64, f64, f64) {
        let h = self.grid.spacing();
        match self.advection {
            Advection::Centered => (-0.5 / h, 0.0, 0.5 / h),
            Advection::Upwind if c >= 0.0 => (-1.0 / h, 1.0 / h, 0.0),
            Advection::Upwind => (0.0, -1.0 / h, 1.0 / h),
        }
    }

    fn residual(&self, u: &[f64], c: f64) -> Vec<f64> {
        let n = u.len();
        let h = self.grid.spacing();
        let d = self.problem.d();
        let f = self.problem.nonlinearity();
        let v = self.conv.apply(u);
        let (dl, dc, dr) = self.first_difference(c);
        let mut out = Vec::with_capacity(n + 1);
        for i in 0..n {
            let left = if i == 0 { -1.0 } else { u[i - 1] };
            let right = if i + 1 == n { 1.0 } else { u[i + 1] };
            let du = dl * left + dc * u[i] + dr * right;
            let d2u = (left - 2.0 * u[i] + right) / (h * h);
            out.push(c * du - d * d2u - f.value(u[i], v[i]));
        }
        out.push(u[self.phase.node] - self.phase.value);
        out
    }

    fn jacobian(&self, u: &[f64], c: f64) -> Mat<f64> {
        let n = u.len();
        let h = self.grid.spacing();
        let d = self.problem.d();
        let f = self.problem.nonlinearity();
        let v = self.conv.apply(u);
        let (dl, dc, dr) = self.first_difference(c);
        let reach = self.conv.reach() as isize;
        let mut jac = Mat::<f64>::zeros(n + 1, n + 1);
        for i in 0..n {
            let fs = f.f_s(u[i], v[i]);
            if fs != 0.0 {
                let lo = (i as isize - reach).max(0) as usize;
                let hi = ((i as isize + reach) as usize).min(n - 1);
                for j in lo..=hi {
                    jac[(i, j)] = -fs * self.conv.weight(i as isize - j as isize);
                }
            }
            jac[(i, i)] += c * dc + 2.0 * d / (h * h) - f.f_r(u[i], v[i]);
            if i > 0 {
                jac[(i, i - 1)] += c * dl - d / (h * h);
            }
            if i + 1 < n {
                jac[(i, i + 1)] += c * dr - d / (h * h);
            }
            let left = if i == 0 { -1.0 } else { u[i - 1] };
            let right = if i + 1 == n { 1.0 } else { u[i + 1] };
            jac[(i, n)] = dl * left + dc * u[i] + dr * right;
        }
        jac[(n, self.phase.node)] = 1.0;
        jac
    }
}

fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Solves for `(c, U)` by damped Newton from `init` (resampled onto the
/// configured grid) or from `tanh(ξ/w)` with `c = 0`.
pub fn solve_wave(problem: &ModelProblem, config: &SolverConfig, init: Option<&WaveSolution>) -> Result<WaveSolution> {
    let grid = config.validate()?;
    let phase_value = config.phase_value.unwrap_or_else(|| problem.middle_zero());
    let system = System::new(problem, grid, phase_value);
    let (mut u, mut c) = match init {
        Some(seed) => (seed.resample(&grid), seed.c),
        None => (
            grid.nodes().iter().map(|x| (x / config.initial_width).tanh()).collect::<Vec<_>>(),
            0.0,
        ),
    };
    let n = u.len();
    let mut res_vec = system.residual(&u, c);
    let mut res = sup_norm(&res_vec);
    let mut trace = vec![NewtonStep {
        iteration: 0,
        residual: res,
        damping: 0.0,
        speed: c,
    }];
    let mut iteration = 0;
    while res >= config.tolerance {
        if iteration >= config.max_iterations {
            return Err(Error::Convergence { trace });
        }
        iteration += 1;
        let (step_u, step_c) = newton_direction(&system, &u, c, &res_vec);
        let mut damping = 1.0;
        loop {
            let trial_u: Vec<f64> = u.iter().zip(&step_u).map(|(a, b)| a + damping * b).collect();
            let trial_c = c + damping * step_c;
            let trial_res = system.residual(&trial_u, trial_c);
            let trial_norm = sup_norm(&trial_res);
            if trial_norm < res {
                u = trial_u;
                c = trial_c;
                res_vec = trial_res;
                res = trial_norm;
                break;
            }
            damping *= 0.5;
            if damping < config.min_damping {
                trace.push(NewtonStep {
                    iteration,
                    residual: res,
                    damping,
                    speed: c,
                });
                return Err(Error::Convergence { trace });
            }
        }
        trace.push(NewtonStep {
            iteration,
            residual: res,
            damping,
            speed: c,
        });
    }
    // One polishing step, kept only if it does not increase the residual.
    if iteration > 0 {
        let (step_u, step_c) = newton_direction(&system, &u, c, &res_vec);
        let trial_u: Vec<f64> = u.iter().zip(&step_u).map(|(a, b)| a + b).collect();
        let trial_res = system.residual(&trial_u, c + step_c);
        let trial_norm = sup_norm(&trial_res);
        if trial_norm <= res {
            u = trial_u;
            c += step_c;
            res = trial_norm;
        }
    }

    let (min_slope, boundary_deviation) = profile_shape(&u);
    if !(min_slope > 0.0) {
        let k = u
            .windows(2)
            .position(|w| w[1] - w[0] == min_slope)
            .unwrap_or(0);
        return Err(Error::Monotonicity {
            min_slope,
            at: grid.node(k),
        });
    }
    if let Some(k) = u.iter().position(|x| x.abs() > 1.0 + RANGE_SLACK) {
        return Err(Error::Numerical(format!(
            "profile leaves [-1, 1]: U = {} at ξ = {}",
            u[k],
            grid.node(k)
        )));
    }
    debug_assert_eq!(u.len(), n);
    Ok(WaveSolution {
        grid,
        u,
        c,
        d: problem.d(),
        advection: system.advection,
        phase: system.phase,
        residual: res,
        tolerance: config.tolerance,
        monotone: true,
        min_slope,
        boundary_deviation,
        iterations: iteration,
        trace,
    })
}

fn newton_direction(system: &System<'_>, u: &[f64], c: f64, residual: &[f64]) -> (Vec<f64>, f64) {
    let jac = system.jacobian(u, c);
    let rhs = Mat::<f64>::from_fn(residual.len(), 1, |i, _| -residual[i]);
    let step = jac.partial_piv_lu().solve(&rhs);
    let n = u.len();
    ((0..n).map(|i| step[(i, 0)]).collect(), step[(n, 0)])
}

/// Sup norm of `cU′ − dU″ − f(U, J*U)` over the grid nodes, evaluated with
/// direct-sum convolution and stencils written out independently of the
/// Newton assembly.
pub fn residual(problem: &ModelProblem, wave: &WaveSolution) -> f64 {
    equation_residual(problem, &wave.grid, &wave.u, wave.c, wave.advection, -1.0, 1.0)
}

/// As [`residual`] for an arbitrary profile and closure constants.
pub fn equation_residual(
    problem: &ModelProblem,
    grid: &Grid,
    u: &[f64],
    c: f64,
    advection: Advection,
    left: f64,
    right: f64,
) -> f64 {
    let conv = Convolution::new(problem.kernel(), *grid, left, right);
    let v = conv.apply_direct(u);
    let h = grid.spacing();
    let n = u.len();
    let at = |i: isize| -> f64 {
        if i < 0 {
            left
        } else if i as usize >= n {
            right
        } else {
            u[i as usize]
        }
    };
    let mut worst = 0.0_f64;
    for i in 0..n as isize {
        let slope = match advection {
            Advection::Centered => (at(i + 1) - at(i - 1)) / (2.0 * h),
            Advection::Upwind => {
                if c >= 0.0 {
                    (at(i) - at(i - 1)) / h
                } else {
                    (at(i + 1) - at(i)) / h
                }
            }
        };
        let curvature = (at(i + 1) - 2.0 * at(i) + at(i - 1)) / (h * h);
        let r = c * slope - problem.d() * curvature - problem.nonlinearity().value(at(i), v[i as usize]);
        worst = worst.max(r.abs());
    }
    worst
}

/// Outcome of a parameter continuation.
#[derive(Debug, Clone)]
pub struct ContinuationResult {
    pub steps: Vec<(f64, WaveSolution)>,
    /// Index and parameter of the first failed step with its error message.
    pub failure: Option<(usize, f64, String)>,
}

/// Solves along `path`, seeding each step with the previous solution.
pub fn continuation<F>(family: F, path: &[f64], config: &SolverConfig) -> Result<ContinuationResult>
where
    F: Fn(f64) -> Result<ModelProblem>,
{
    let mut steps: Vec<(f64, WaveSolution)> = Vec::with_capacity(path.len());
    for (k, &p) in path.iter().enumerate() {
        let attempt = family(p).and_then(|problem| {
            solve_wave(&problem, config, steps.last().map(|(_, w)| w))
        });
        match attempt {
            Ok(wave) => steps.push((p, wave)),
            Err(e) if k == 0 => return Err(e),
            Err(e) => {
                return Ok(ContinuationResult {
                    steps,
                    failure: Some((k, p, e.to_string())),
                })
            }
        }
    }
    Ok(ContinuationResult {
        steps,
        failure: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{BuiltinModel, PhaseParams};

    fn phase_d1(epsilon: f64, detune: f64) -> ModelProblem {
        PhaseParams {
            epsilon,
            detune,
            d: 1.0,
            sigma: 1.0,
        }
        .build()
        .unwrap()
    }

    fn small() -> SolverConfig {
        SolverConfig::with_grid(20.0, 400)
    }

    #[test]
    fn symmetric_phase_model_is_standing() {
        let p = phase_d1(0.1, 0.0);
        let w = solve_wave(&p, &small(), None).unwrap();
        assert!(w.c.abs() < 1e-8, "c = {}", w.c);
        assert!(w.residual < 1e-10);
        assert!(residual(&p, &w) < 1e-8);
    }

    #[test]
    fn builtins_converge_with_zero_speed() {
        for m in BuiltinModel::ALL {
            let p = m.build();
            let w = solve_wave(&p, &SolverConfig::with_grid(30.0, 600), None).unwrap();
            assert!(w.c.abs() < 1e-8, "{m}: c = {}", w.c);
            assert!(w.monotone && w.min_slope > 0.0);
            assert!(residual(&p, &w) < 1e-8, "{m}");
        }
    }

    #[test]
    fn detuned_phase_speed_has_sign_of_diagonal_integral() {
        let p = phase_d1(0.1, 0.1);
        let w = solve_wave(&p, &small(), None).unwrap();
        // ∫ (s − s³ + 0.1(1 − s²)) ds = 0.4/3 > 0.
        assert!(w.c > 1e-3, "c = {}", w.c);
        let p = phase_d1(0.1, -0.1);
        let w = solve_wave(&p, &small(), None).unwrap();
        assert!(w.c < -1e-3, "c = {}", w.c);
    }

    #[test]
    fn constant_state_has_zero_residual() {
        let grid = Grid::new(12.0, 240).unwrap();
        let ones = vec![1.0; grid.len()];
        for m in BuiltinModel::ALL {
            let p = m.build();
            for c in [0.0, 0.7, -1.3] {
                for adv in [Advection::Centered, Advection::Upwind] {
                    let r = equation_residual(&p, &grid, &ones, c, adv, 1.0, 1.0);
                    assert!(r < 1e-14, "{m} c={c}: {r:e}");
                }
            }
        }
    }

    #[test]
    fn perturbation_raises_residual() {
        let p = phase_d1(0.1, 0.0);
        let w = solve_wave(&p, &small(), None).unwrap();
        let base = residual(&p, &w);
        let mut bent = w.clone();
        for (u, x) in bent.u.iter_mut().zip(w.xi()) {
            *u += 1e-3 / x.cosh();
        }
        assert!(residual(&p, &bent) > 1e3 * base.max(1e-12));
    }

    #[test]
    fn text_round_trip_and_seed() {
        let p = phase_d1(0.1, 0.1);
        let w = solve_wave(&p, &small(), None).unwrap();
        let back = WaveSolution::from_text(&w.to_text()).unwrap();
        assert_eq!(back.c, w.c);
        assert_eq!(back.u, w.u);
        let seeded = solve_wave(&p, &small(), Some(&back)).unwrap();
        assert!(seeded.iterations <= 1);
        assert!((seeded.c - w.c).abs() < 1e-12);
    }

    #[test]
    fn round_off_in_saturated_tails_is_not_a_slope() {
        let one_less = 1.0 - f64::EPSILON;
        let u = [-1.0, -1.0, -0.5, 0.0, 0.5, one_less, 1.0, one_less, 1.0];
        let (min_slope, _) = profile_shape(&u);
        assert!(min_slope > 0.49 && min_slope <= 0.5);
        let u = [-1.0, -0.5, 0.0, 0.6, 0.5, 1.0];
        assert!(profile_shape(&u).0 < 0.0);
        let u = [-1.0, 0.0, 1.0 - 1e-6, 1.0 - 2e-6];
        assert!(profile_shape(&u).0 < 0.0);
    }

    #[test]
    fn config_validation() {
        let p = BuiltinModel::Phase.build();
        let too_coarse = SolverConfig::with_grid(40.0, 64);
        assert!(matches!(solve_wave(&p, &too_coarse, None), Err(Error::Spec(_))));
        let too_big = SolverConfig::with_grid(40.0, 10_000);
        assert!(matches!(solve_wave(&p, &too_big, None), Err(Error::Size { .. })));
        let too_short = SolverConfig::with_grid(5.0, 400);
        assert!(matches!(solve_wave(&p, &too_short, None), Err(Error::Spec(_))));
    }

    #[test]
    fn stalled_newton_reports_trace() {
        let p = phase_d1(0.1, 0.1);
        let config = SolverConfig {
            max_iterations: 1,
            tolerance: 1e-15,
            ..small()
        };
        match solve_wave(&p, &config, None) {
            Err(Error::Convergence { trace }) => assert!(!trace.is_empty()),
            other => panic!("expected convergence error, got {other:?}"),
        }
    }

    #[test]
    fn continuation_in_epsilon() {
        let family = |eps: f64| {
            PhaseParams {
                epsilon: eps,
                detune: 0.1,
                d: 1.0,
                sigma: 1.0,
            }
            .build()
        };
        let path = [0.05, 0.1, 0.2];
        let forward = continuation(family, &path, &small()).unwrap();
        assert!(forward.failure.is_none());
        let speeds: Vec<f64> = forward.steps.iter().map(|(_, w)| w.c).collect();
        for pair in speeds.windows(2) {
            assert!((pair[1] - pair[0]).abs() < 0.1);
        }
        let reversed: Vec<f64> = path.iter().rev().copied().collect();
        let backward = continuation(family, &reversed, &small()).unwrap();
        for (k, (_, w)) in backward.steps.iter().enumerate() {
            assert!((w.c - speeds[path.len() - 1 - k]).abs() < 1e-8);
        }
        let single = continuation(family, &[0.1], &small()).unwrap();
        let direct = solve_wave(&family(0.1).unwrap(), &small(), None).unwrap();
        assert_eq!(single.steps[0].1.c, direct.c);
        assert_eq!(single.steps[0].1.u, direct.u);
    }
}
