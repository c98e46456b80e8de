//! Uniform grids on `[−L, L]` and the discrete `J`-convolution used by the
//! wave solver, the linearization and the residue computation.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::KernelSpec;

/// `n` intervals on `[−L, L]`: nodes `ξ_i = −L + i·h`, `i = 0..=n`, `h = 2L/n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub half_width: f64,
    pub intervals: usize,
}

impl Grid {
    pub fn new(half_width: f64, intervals: usize) -> Result<Self> {
        if !(half_width > 0.0 && half_width.is_finite()) {
            return Err(Error::Spec(format!("domain half-width must be positive, got {half_width}")));
        }
        if intervals < 2 || intervals % 2 != 0 {
            return Err(Error::Spec(format!(
                "number of intervals must be even and at least 2, got {intervals}"
            )));
        }
        Ok(Self {
            half_width,
            intervals,
        })
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / self.intervals as f64
    }

    pub fn len(&self) -> usize {
        self.intervals + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn node(&self, i: usize) -> f64 {
        -self.half_width + self.spacing() * i as f64
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.node(i)).collect()
    }

    /// Index of the node at `ξ = 0`.
    pub fn centre(&self) -> usize {
        self.intervals / 2
    }

    /// Nearest node index to `ξ`, clamped to the grid.
    pub fn nearest(&self, xi: f64) -> usize {
        let k = ((xi + self.half_width) / self.spacing()).round();
        k.clamp(0.0, self.intervals as f64) as usize
    }

    /// Whether the two grids share their spacing to round-off.
    pub fn same_spacing(&self, other: &Grid) -> bool {
        (self.spacing() - other.spacing()).abs() <= 1e-12 * self.spacing()
    }
}

/// Discrete convolution weights `w_k ≈ h·J(kh)`, `|k| ≤ K`, rescaled so that
/// `Σ w_k` equals the kernel mass exactly; with unit mass the constants ±1
/// remain exact equilibria of the discrete problem.
#[derive(Clone)]
pub struct Convolution {
    weights: Vec<f64>,
    reach: usize,
    grid: Grid,
    left: f64,
    right: f64,
    fft_len: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    weights_hat: Vec<Complex64>,
}

impl std::fmt::Debug for Convolution {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Convolution")
            .field("reach", &self.reach)
            .field("grid", &self.grid)
            .field("left", &self.left)
            .field("right", &self.right)
            .finish()
    }
}

impl Convolution {
    /// Convolution on `grid` with `u` extended by `left` below `−L` and
    /// `right` above `L`.
    pub fn new(kernel: &KernelSpec, grid: Grid, left: f64, right: f64) -> Self {
        let h = grid.spacing();
        let reach = (kernel.effective_radius() / h).ceil() as usize;
        let mut weights: Vec<f64> = (0..=2 * reach)
            .map(|j| h * kernel.eval((j as f64 - reach as f64) * h))
            .collect();
        let total: f64 = weights.iter().sum();
        if total > 0.0 {
            let scale = kernel.mass() / total;
            weights.iter_mut().for_each(|w| *w *= scale);
        }
        let padded = grid.len() + 2 * reach;
        let fft_len = (padded + 2 * reach).next_power_of_two();
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(fft_len);
        let inverse = planner.plan_fft_inverse(fft_len);
        let mut weights_hat = vec![Complex64::new(0.0, 0.0); fft_len];
        for (j, w) in weights.iter().enumerate() {
            weights_hat[j] = Complex64::new(*w, 0.0);
        }
        forward.process(&mut weights_hat);
        Self {
            weights,
            reach,
            grid,
            left,
            right,
            fft_len,
            forward,
            inverse,
            weights_hat,
        }
    }

    /// Wave closure: `u = −1` below the grid and `u = +1` above.
    pub fn for_wave(kernel: &KernelSpec, grid: Grid) -> Self {
        Self::new(kernel, grid, -1.0, 1.0)
    }

    /// Zero extension, for perturbations that vanish outside the grid.
    pub fn homogeneous(kernel: &KernelSpec, grid: Grid) -> Self {
        Self::new(kernel, grid, 0.0, 0.0)
    }

    pub fn reach(&self) -> usize {
        self.reach
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    /// `w_k` for `k = −K..=K`.
    pub fn weight(&self, k: isize) -> f64 {
        let j = k + self.reach as isize;
        if j < 0 || j as usize >= self.weights.len() {
            0.0
        } else {
            self.weights[j as usize]
        }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    fn extended(&self, u: &[f64], i: isize) -> f64 {
        if i < 0 {
            self.left
        } else if i as usize >= u.len() {
            self.right
        } else {
            u[i as usize]
        }
    }

    /// `(J*u)_i` by the fast transform.
    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        assert_eq!(u.len(), self.grid.len(), "vector does not match the grid");
        let n = u.len();
        let k = self.reach;
        let mut buf = vec![Complex64::new(0.0, 0.0); self.fft_len];
        for (j, slot) in buf.iter_mut().take(n + 2 * k).enumerate() {
            *slot = Complex64::new(self.extended(u, j as isize - k as isize), 0.0);
        }
        self.forward.process(&mut buf);
        for (b, w) in buf.iter_mut().zip(&self.weights_hat) {
            *b *= w;
        }
        self.inverse.process(&mut buf);
        let scale = 1.0 / self.fft_len as f64;
        // Full linear convolution index j + 2K corresponds to output node j.
        (0..n).map(|i| buf[i + 2 * k].re * scale).collect()
    }

    /// `(J*u)_i` by direct summation.
    pub fn apply_direct(&self, u: &[f64]) -> Vec<f64> {
        let k = self.reach as isize;
        (0..u.len() as isize)
            .map(|i| {
                (-k..=k)
                    .map(|m| self.weight(m) * self.extended(u, i - m))
                    .sum()
            })
            .collect()
    }

    /// Dense matrix `W` with `(J*u) = W u + boundary` where `boundary` holds
    /// the contributions of the extension constants.
    pub fn matrix(&self) -> faer::Mat<f64> {
        let n = self.grid.len();
        let k = self.reach as isize;
        faer::Mat::from_fn(n, n, |i, j| {
            let m = i as isize - j as isize;
            if m.abs() <= k {
                self.weight(m)
            } else {
                0.0
            }
        })
    }
}

/// Linear interpolation of `(xs, ys)` at `x`, constant beyond the ends.
pub fn interpolate(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let n = xs.len();
    if x <= xs[0] {
        return ys[0];
    }
    if x >= xs[n - 1] {
        return ys[n - 1];
    }
    let k = xs.partition_point(|&v| v <= x).saturating_sub(1).min(n - 2);
    let t = (x - xs[k]) / (xs[k + 1] - xs[k]);
    (1.0 - t) * ys[k] + t * ys[k + 1]
}

/// Six-point Lagrange interpolation on a uniform grid, used where linear
/// interpolation would dominate the comparison error.
pub fn interpolate_uniform(grid: &Grid, values: &[f64], x: f64) -> f64 {
    let h = grid.spacing();
    let pos = (x + grid.half_width) / h;
    let n = values.len();
    if n < 6 {
        return interpolate(&grid.nodes(), values, x);
    }
    let base = (pos.floor() as isize - 2).clamp(0, n as isize - 6) as usize;
    let mut acc = 0.0;
    for j in 0..6 {
        let mut weight = 1.0;
        for m in 0..6 {
            if m != j {
                weight *= (pos - (base + m) as f64) / (j as f64 - m as f64);
            }
        }
        acc += weight * values[base + j];
    }
    acc
}
