//! Dense linearization about a computed wave and its spectral diagnostics.
//!
//! The operator acting on perturbations `v` of the wave is
//! `Π_L v = d v″ − c v′ + f_r v + f_s (J∗v)` with `f_r`, `f_s` evaluated at
//! `(U, J∗U)`. It is discretized on the wave grid with a Dirichlet closure
//! (perturbations vanish outside `[−L, L]`), the same first-difference stencil
//! the wave solver used, and the quadrature convolution matrix. The adjoint is
//! assembled from its own formula `d v″ + c v′ + f_r v + J∗(f_s v)` rather than
//! by transposing, so the discrete duality is a genuine check.

use std::io::Write as _;
use std::path::Path;

use faer::Mat;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::charfn::RegionReport;
use crate::error::{Error, Result};
use crate::grid::{Convolution, Grid};
use crate::kernel::KernelSpec;
use crate::model::ModelProblem;
use crate::stats::{fit_envelope, spearman, EnvelopeFit};
use crate::wave::{Advection, WaveSolution};

/// Largest number of grid nodes accepted for dense assembly.
pub const DENSE_NODE_CAP: usize = 4097;
/// Share of the grid (split evenly between the two ends) treated as "outer".
pub const OUTER_SHARE: f64 = 0.2;
/// An eigenvector is delocalized when its outer mass is at least this
/// fraction of the outer mass of the smoothest Dirichlet mode
/// `sin(π(ξ+L)/2L)`, the least boundary-heavy extended vector on the grid.
pub const DELOCALIZED_RATIO: f64 = 0.5;
/// Singular values below this fraction of the largest one are treated as
/// zero when testing range membership.
pub const RANGE_CUTOFF: f64 = 1e-4;
/// Frequencies at which `Π_L − iη` is checked for injectivity.
pub const INJECTIVITY_FREQUENCIES: [f64; 3] = [0.5, 1.0, 2.0];

/// Boundary treatment of the discrete operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Closure {
    /// Values outside the grid are zero.
    Dirichlet,
    /// The last node is identified with the first; the operator acts on the
    /// first `intervals` nodes.
    Periodic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorMetadata {
    pub problem: String,
    pub c: f64,
    pub d: f64,
    pub advection: Advection,
    pub closure: Closure,
    pub grid: Grid,
    pub wave_residual: Option<f64>,
}

/// Dense discretization of `Π_L` or of its formal adjoint.
#[derive(Debug, Clone)]
pub struct LinearizedOperator {
    pub matrix: Mat<f64>,
    pub adjoint: bool,
    pub meta: OperatorMetadata,
    /// `f_r(U, J∗U)` per node.
    pub f_r: Vec<f64>,
    /// `f_s(U, J∗U)` per node.
    pub f_s: Vec<f64>,
}

/// Variable coefficients of a linear operator of the form
/// `d v″ − c v′ + f_r v + f_s (J∗v)`.
#[derive(Debug, Clone)]
pub struct Coefficients<'a> {
    pub name: String,
    pub grid: Grid,
    pub d: f64,
    pub c: f64,
    pub advection: Advection,
    pub kernel: &'a KernelSpec,
    pub f_r: Vec<f64>,
    pub f_s: Vec<f64>,
}

impl LinearizedOperator {
    pub fn len(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn spacing(&self) -> f64 {
        self.meta.grid.spacing()
    }

    /// Nodes the operator acts on.
    pub fn nodes(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.meta.grid.node(i)).collect()
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.len(), "vector does not match the operator");
        let x = Mat::from_fn(v.len(), 1, |i, _| v[i]);
        let y = &self.matrix * &x;
        (0..v.len()).map(|i| y[(i, 0)]).collect()
    }

    pub fn trace(&self) -> f64 {
        (0..self.len()).map(|i| self.matrix[(i, i)]).sum()
    }

    /// Induced ∞-norm (largest absolute row sum).
    pub fn norm(&self) -> f64 {
        let n = self.len();
        (0..n)
            .map(|i| (0..n).map(|j| self.matrix[(i, j)].abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Discrete `L²` pairing `h·Σ u_i v_i`.
    pub fn pairing(&self, u: &[f64], v: &[f64]) -> f64 {
        self.spacing() * u.iter().zip(v).map(|(a, b)| a * b).sum::<f64>()
    }
}

/// Assembles `Π_L` (or its adjoint) about `wave`.
pub fn assemble_linearization(problem: &ModelProblem, wave: &WaveSolution, adjoint: bool) -> Result<LinearizedOperator> {
    let grid = wave.grid;
    check_size(grid.len())?;
    let f = problem.nonlinearity();
    let v = Convolution::for_wave(problem.kernel(), grid).apply(&wave.u);
    let coeffs = Coefficients {
        name: problem.name().to_string(),
        grid,
        d: wave.d,
        c: wave.c,
        advection: wave.advection,
        kernel: problem.kernel(),
        f_r: wave.u.iter().zip(&v).map(|(&r, &s)| f.f_r(r, s)).collect(),
        f_s: wave.u.iter().zip(&v).map(|(&r, &s)| f.f_s(r, s)).collect(),
    };
    let mut op = assemble(&coeffs, Closure::Dirichlet, adjoint)?;
    op.meta.wave_residual = Some(wave.residual);
    Ok(op)
}

fn check_size(nodes: usize) -> Result<()> {
    if nodes > DENSE_NODE_CAP {
        return Err(Error::Size {
            requested: nodes,
            cap: DENSE_NODE_CAP,
        });
    }
    Ok(())
}

/// Assembles the operator with the given coefficients and closure.
pub fn assemble(coeffs: &Coefficients<'_>, closure: Closure, adjoint: bool) -> Result<LinearizedOperator> {
    let grid = coeffs.grid;
    check_size(grid.len())?;
    if coeffs.f_r.len() != grid.len() || coeffs.f_s.len() != grid.len() {
        return Err(Error::Grid(format!(
            "coefficient vectors have {} and {} entries, grid has {}",
            coeffs.f_r.len(),
            coeffs.f_s.len(),
            grid.len()
        )));
    }
    let n = match closure {
        Closure::Dirichlet => grid.len(),
        Closure::Periodic => grid.len() - 1,
    };
    let conv = Convolution::homogeneous(coeffs.kernel, grid);
    let reach = conv.reach() as isize;
    if closure == Closure::Periodic && 2 * reach >= n as isize {
        return Err(Error::Grid(format!(
            "kernel reach {reach} nodes does not fit a periodic grid of {n} nodes"
        )));
    }
    let h = grid.spacing();
    let (d, c) = (coeffs.d, coeffs.c);
    // Stencil of D as offsets −1, 0, +1.
    let stencil = match coeffs.advection {
        Advection::Centered => [-0.5 / h, 0.0, 0.5 / h],
        Advection::Upwind if c >= 0.0 => [-1.0 / h, 1.0 / h, 0.0],
        Advection::Upwind => [0.0, -1.0 / h, 1.0 / h],
    };
    let column = |i: isize| -> Option<usize> {
        match closure {
            Closure::Dirichlet => (i >= 0 && (i as usize) < n).then_some(i as usize),
            Closure::Periodic => Some(i.rem_euclid(n as isize) as usize),
        }
    };
    let mut m = Mat::<f64>::zeros(n, n);
    for i in 0..n {
        let ii = i as isize;
        for off in -1isize..=1 {
            let Some(j) = column(ii + off) else { continue };
            let second = if off == 0 { -2.0 } else { 1.0 } * d / (h * h);
            // Adjoint drift is `+c·D̃` with D̃ = −Dᵀ, whose entry at offset
            // `off` is −(stencil at offset −off).
            let drift = if adjoint {
                c * -stencil[(1 - off) as usize]
            } else {
                -c * stencil[(1 + off) as usize]
            };
            m[(i, j)] += second + drift;
        }
        m[(i, i)] += coeffs.f_r[i];
        for k in -reach..=reach {
            let Some(j) = column(ii - k) else { continue };
            // `f_s(ξ_i) Σ w_{i−j} v_j` for Π_L; `Σ w_{j−i} f_s(ξ_j) v_j` for
            // the adjoint.
            m[(i, j)] += if adjoint {
                coeffs.f_s[j] * conv.weight(-k)
            } else {
                coeffs.f_s[i] * conv.weight(k)
            };
        }
    }
    Ok(LinearizedOperator {
        matrix: m,
        adjoint,
        meta: OperatorMetadata {
            problem: coeffs.name.clone(),
            c,
            d,
            advection: coeffs.advection,
            closure,
            grid,
            wave_residual: None,
        },
        f_r: coeffs.f_r.clone(),
        f_s: coeffs.f_s.clone(),
    })
}

/// One computed eigenvalue with its localization measure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Eigenvalue {
    pub value: Complex64,
    /// Share of `|ψ|²` in the outer 20% of the grid.
    pub outer_mass: f64,
    pub delocalized: bool,
}

/// Diagnostics of the eigenvalue closest to zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZeroMode {
    /// Position in the sorted eigenvalue list.
    pub index: usize,
    pub value: Complex64,
    /// `|λ₀| / ‖op‖`.
    pub relative_modulus: f64,
    /// `|⟨ψ₀, U′⟩| / (‖ψ₀‖‖U′‖)`.
    pub cosine: f64,
    /// Relative least-squares residual of `Π_L x = U′`.
    pub simplicity_residual: f64,
}

/// Null mode of the adjoint, scaled so that `⟨Ψ, U′⟩ = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdjointMode {
    pub value: Complex64,
    /// Share of `Σ|Ψ|` carried by positive entries, end nodes excluded.
    pub positive_fraction: f64,
    /// `⟨Ψ, U′⟩` for the unit-norm eigenvector before rescaling.
    pub raw_pairing: f64,
    pub psi: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RangeTest {
    /// `⟨Ψ, h⟩` (with the report's normalization of Ψ).
    pub inner_product: f64,
    /// `‖op·x − h‖ / ‖h‖` for the rank-truncated least-squares solution.
    pub residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InjectivityCheck {
    pub eta: f64,
    pub sigma_min: f64,
    pub floor: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectrumReport {
    pub grid: Grid,
    /// Sorted by real part, largest first.
    pub eigenvalues: Vec<Eigenvalue>,
    pub norm: f64,
    pub trace: f64,
    pub zero_mode: ZeroMode,
    pub adjoint: AdjointMode,
    pub regions: RegionReport,
    /// Range test of `U′` itself.
    pub range_u_prime: RangeTest,
    pub injectivity: Vec<InjectivityCheck>,
    /// Eigenvalue with the smallest real part.
    pub leftmost: Complex64,
    /// Eigenvalues other than λ₀ with `Re λ > 1e−4·‖op‖`.
    pub unstable: Vec<Complex64>,
    /// Discrete `U′` on the operator nodes.
    #[serde(skip)]
    pub u_prime: Vec<f64>,
    /// Eigenvectors as columns, in the order of `eigenvalues`.
    #[serde(skip)]
    pub vectors: Option<Mat<Complex64>>,
}

impl SpectrumReport {
    /// The real eigenvector of λ₀, scaled to `⟨ψ₀, U′⟩ > 0` and unit sup norm.
    pub fn zero_mode_vector(&self) -> Option<Vec<f64>> {
        let vectors = self.vectors.as_ref()?;
        let v = real_vector(vectors, self.zero_mode.index);
        let sign = if dot(&v, &self.u_prime) < 0.0 { -1.0 } else { 1.0 };
        let top = v.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
        Some(v.iter().map(|x| sign * x / top).collect())
    }

    /// Rows `re,im,delocalized,outer_mass,decay_rate`.
    pub fn to_csv(&self, classification: Option<&Classification>) -> String {
        let mut out = String::from("re,im,delocalized,outer_mass,decay_rate\n");
        for (k, e) in self.eigenvalues.iter().enumerate() {
            let rate = classification
                .and_then(|c| c.entries.get(k))
                .and_then(|c| c.decay.as_ref())
                .map(|f| format!("{:.10e}", f.rate))
                .unwrap_or_default();
            out.push_str(&format!(
                "{:.15e},{:.15e},{},{:.6e},{}\n",
                e.value.re, e.value.im, e.delocalized, e.outer_mass, rate
            ));
        }
        out
    }

    /// `(ξ, Ψ(ξ), ψ₀(ξ))` as whitespace-separated text.
    pub fn modes_to_text(&self) -> String {
        let zero = self.zero_mode_vector();
        let mut out = String::from("# xi psi zero_mode\n");
        for (i, p) in self.adjoint.psi.iter().enumerate() {
            let z = zero.as_ref().map(|z| z[i]).unwrap_or(f64::NAN);
            out.push_str(&format!("{:.12e} {:.12e} {:.12e}\n", self.grid.node(i), p, z));
        }
        out
    }

    pub fn write_csv(&self, path: &Path, classification: Option<&Classification>) -> Result<()> {
        write_file(path, &self.to_csv(classification))
    }

    pub fn write_modes(&self, path: &Path) -> Result<()> {
        write_file(path, &self.modes_to_text())
    }
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    let err = |e| Error::io(path.display().to_string(), e);
    let mut file = std::fs::File::create(path).map_err(err)?;
    file.write_all(text.as_bytes()).map_err(err)
}

fn dot(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}

fn norm2(u: &[f64]) -> f64 {
    dot(u, u).sqrt()
}

/// Column `k` rotated so that its largest entry is real, real part returned.
fn real_vector(vectors: &Mat<Complex64>, k: usize) -> Vec<f64> {
    let n = vectors.nrows();
    let (mut top, mut at) = (0.0, 0);
    for i in 0..n {
        let a = vectors[(i, k)].norm();
        if a > top {
            top = a;
            at = i;
        }
    }
    let phase = if top > 0.0 {
        vectors[(at, k)].conj() / top
    } else {
        Complex64::new(1.0, 0.0)
    };
    (0..n).map(|i| (vectors[(i, k)] * phase).re).collect()
}

fn outer_share(grid: &Grid, weights: impl Iterator<Item = f64>) -> f64 {
    let cut = (1.0 - OUTER_SHARE) * grid.node(0).abs().max(grid.node(grid.len() - 1).abs());
    let (mut outer, mut total) = (0.0, 0.0);
    for (i, w) in weights.enumerate() {
        total += w;
        if grid.node(i).abs() >= cut {
            outer += w;
        }
    }
    if total > 0.0 {
        outer / total
    } else {
        0.0
    }
}

fn outer_mass(vectors: &Mat<Complex64>, k: usize, grid: &Grid) -> f64 {
    outer_share(grid, (0..vectors.nrows()).map(|i| vectors[(i, k)].norm_sqr()))
}

/// Outer mass below which an eigenvector counts as localized.
pub fn delocalization_threshold(grid: &Grid) -> f64 {
    let (lo, width) = (grid.node(0), grid.node(grid.len() - 1) - grid.node(0));
    let smooth = (0..grid.len()).map(|i| (std::f64::consts::PI * (grid.node(i) - lo) / width).sin().powi(2));
    DELOCALIZED_RATIO * outer_share(grid, smooth)
}

fn eigen_decomposition(op: &LinearizedOperator) -> Result<(Vec<Complex64>, Mat<Complex64>)> {
    let evd = op.matrix.eigen().map_err(|e| {
        Error::Numerical(format!(
            "dense eigensolver failed ({e:?}); ‖op‖∞ = {:e}, n = {}",
            op.norm(),
            op.len()
        ))
    })?;
    let s = evd.S();
    let values: Vec<Complex64> = (0..op.len()).map(|i| s[i]).collect();
    Ok((values, evd.U().to_owned()))
}

/// Orthonormal basis of the numerical range of a matrix.
pub struct RangeBasis {
    basis: Mat<f64>,
    /// Number of discarded singular directions.
    pub deficiency: usize,
    pub singular_values: Vec<f64>,
}

impl RangeBasis {
    pub fn new(op: &LinearizedOperator) -> Result<Self> {
        let svd = op
            .matrix
            .thin_svd()
            .map_err(|e| Error::Numerical(format!("singular value decomposition failed ({e:?})")))?;
        let n = op.len();
        let sv: Vec<f64> = (0..n).map(|i| svd.S()[i]).collect();
        let top = sv.iter().fold(0.0_f64, |m, x| m.max(*x));
        let keep: Vec<usize> = (0..n).filter(|&i| sv[i] >= RANGE_CUTOFF * top).collect();
        let u = svd.U();
        let basis = Mat::from_fn(n, keep.len(), |i, j| u[(i, keep[j])]);
        Ok(Self {
            basis,
            deficiency: n - keep.len(),
            singular_values: sv,
        })
    }

    /// `‖h − P h‖ / ‖h‖` with `P` the orthogonal projector onto the range.
    pub fn residual(&self, h: &[f64]) -> f64 {
        let nh = norm2(h);
        if nh == 0.0 {
            return 0.0;
        }
        let x = Mat::from_fn(h.len(), 1, |i, _| h[i]);
        let coeffs = self.basis.transpose() * &x;
        let proj = &self.basis * &coeffs;
        let r: f64 = (0..h.len()).map(|i| (h[i] - proj[(i, 0)]).powi(2)).sum();
        r.sqrt() / nh
    }
}

/// `⟨Ψ, h⟩` and the relative least-squares residual of `op·x = h`.
pub fn range_membership(psi: &[f64], op: &LinearizedOperator, h: &[f64]) -> Result<RangeTest> {
    if psi.len() != op.len() || h.len() != op.len() {
        return Err(Error::Grid(format!(
            "Ψ has {} entries and h {}, operator has {}",
            psi.len(),
            h.len(),
            op.len()
        )));
    }
    let basis = RangeBasis::new(op)?;
    Ok(RangeTest {
        inner_product: op.pairing(psi, h),
        residual: basis.residual(h),
    })
}

/// Agreement of the two range tests over a batch of right-hand sides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RangeIdentity {
    pub tests: Vec<RangeTest>,
    /// Rank correlation of `|⟨Ψ, h⟩|` with the least-squares residual.
    pub spearman: f64,
}

/// Runs both range tests on every `h` in `samples`.
pub fn range_identity(psi: &[f64], op: &LinearizedOperator, samples: &[Vec<f64>]) -> Result<RangeIdentity> {
    if psi.len() != op.len() || samples.iter().any(|h| h.len() != op.len()) {
        return Err(Error::Grid("Ψ or a right-hand side does not match the operator".into()));
    }
    let basis = RangeBasis::new(op)?;
    let tests: Vec<RangeTest> = samples
        .iter()
        .map(|h| RangeTest {
            inner_product: op.pairing(psi, h),
            residual: basis.residual(h),
        })
        .collect();
    let ip: Vec<f64> = tests.iter().map(|t| t.inner_product.abs()).collect();
    let res: Vec<f64> = tests.iter().map(|t| t.residual).collect();
    Ok(RangeIdentity {
        spearman: spearman(&ip, &res),
        tests,
    })
}

/// Smooth random right-hand side with unit discrete norm: a few Gaussian
/// bumps with random centres, widths and signs. `uniform` supplies numbers
/// in `[0, 1)`.
pub fn random_smooth_rhs(grid: &Grid, len: usize, mut uniform: impl FnMut() -> f64) -> Vec<f64> {
    let half = grid.half_width;
    let mut h = vec![0.0; len];
    for _ in 0..3 {
        let centre = (2.0 * uniform() - 1.0) * 0.5 * half;
        let width = 0.5 + 3.0 * uniform();
        let amp = 2.0 * uniform() - 1.0;
        for (i, v) in h.iter_mut().enumerate() {
            let t = (grid.node(i) - centre) / width;
            *v += amp * (-0.5 * t * t).exp();
        }
    }
    let norm = (grid.spacing() * dot(&h, &h)).sqrt();
    h.iter_mut().for_each(|v| *v /= norm);
    h
}

/// `U′ − (⟨Ψ,U′⟩/⟨Ψ,w⟩)·w`, which lies in the range whenever `⟨Ψ,w⟩ ≠ 0`.
pub fn project_out(op: &LinearizedOperator, psi: &[f64], target: &[f64], w: &[f64]) -> Result<Vec<f64>> {
    let pw = op.pairing(psi, w);
    if pw.abs() < 1e-12 * norm2(psi) * norm2(w) * op.spacing() {
        return Err(Error::Spec("projection direction is orthogonal to Ψ".into()));
    }
    let t = op.pairing(psi, target) / pw;
    Ok(target.iter().zip(w).map(|(a, b)| a - t * b).collect())
}

/// Discrete `U′` on the operator nodes, with the ±1 end states as ghosts.
fn discrete_derivative(op: &LinearizedOperator, u: &[f64]) -> Vec<f64> {
    let h = op.spacing();
    let n = op.len();
    (0..n)
        .map(|i| {
            let left = if i == 0 { -1.0 } else { u[i - 1] };
            let right = if i + 1 == u.len() { 1.0 } else { u[i + 1] };
            (right - left) / (2.0 * h)
        })
        .collect()
}

/// Smallest singular value of `op − iη·I` against the floor `h²·‖op‖`.
pub fn injectivity_check(op: &LinearizedOperator, eta: f64) -> Result<InjectivityCheck> {
    let n = op.len();
    let shifted = Mat::<Complex64>::from_fn(n, n, |i, j| {
        let diag = if i == j { Complex64::new(0.0, -eta) } else { Complex64::new(0.0, 0.0) };
        Complex64::new(op.matrix[(i, j)], 0.0) + diag
    });
    let sv = shifted
        .singular_values()
        .map_err(|e| Error::Numerical(format!("singular values failed ({e:?})")))?;
    let sigma_min = sv.iter().fold(f64::INFINITY, |m, x| m.min(*x));
    let h = op.spacing();
    let floor = h * h * op.norm();
    Ok(InjectivityCheck {
        eta,
        sigma_min,
        floor,
        passed: sigma_min > floor,
    })
}

/// Full dense spectral analysis of `op` (about a wave with profile `u`) and
/// of its adjoint.
pub fn eigen_report(
    op: &LinearizedOperator,
    adjoint_op: &LinearizedOperator,
    u: &[f64],
    regions: RegionReport,
) -> Result<SpectrumReport> {
    if op.adjoint || !adjoint_op.adjoint {
        return Err(Error::Spec("eigen_report expects (operator, adjoint) in that order".into()));
    }
    if op.len() != adjoint_op.len() || op.meta.grid != adjoint_op.meta.grid || u.len() < op.len() {
        return Err(Error::Grid("operator, adjoint and profile are on different grids".into()));
    }
    let grid = op.meta.grid;
    let n = op.len();
    let norm = op.norm();
    let u_prime = discrete_derivative(op, u);

    let (values, vectors) = eigen_decomposition(op)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[b].re.total_cmp(&values[a].re).then(values[b].im.total_cmp(&values[a].im)));
    let vectors = Mat::from_fn(n, n, |i, j| vectors[(i, order[j])]);
    let threshold = delocalization_threshold(&grid);
    let eigenvalues: Vec<Eigenvalue> = order
        .iter()
        .enumerate()
        .map(|(k, &o)| {
            let outer = outer_mass(&vectors, k, &grid);
            Eigenvalue {
                value: values[o],
                outer_mass: outer,
                delocalized: outer >= threshold,
            }
        })
        .collect();

    let index = (0..n)
        .min_by(|&a, &b| eigenvalues[a].value.norm().total_cmp(&eigenvalues[b].value.norm()))
        .expect("operator is non-empty");
    let lambda0 = eigenvalues[index].value;
    let cosine = {
        let (mut num, mut vv) = (Complex64::new(0.0, 0.0), 0.0);
        for i in 0..n {
            num += vectors[(i, index)].conj() * u_prime[i];
            vv += vectors[(i, index)].norm_sqr();
        }
        num.norm() / (vv.sqrt() * norm2(&u_prime))
    };
    let basis = RangeBasis::new(op)?;
    let simplicity_residual = basis.residual(&u_prime);

    let (adj_values, adj_vectors) = eigen_decomposition(adjoint_op)?;
    let adj_index = (0..n)
        .min_by(|&a, &b| adj_values[a].norm().total_cmp(&adj_values[b].norm()))
        .expect("operator is non-empty");
    let mut psi = real_vector(&adj_vectors, adj_index);
    let scale = norm2(&psi);
    psi.iter_mut().for_each(|p| *p /= scale);
    let raw_pairing = op.pairing(&psi, &u_prime);
    psi.iter_mut().for_each(|p| *p /= raw_pairing);
    let interior = &psi[1..n - 1];
    let total: f64 = interior.iter().map(|p| p.abs()).sum();
    let positive: f64 = interior.iter().filter(|p| **p > 0.0).sum();
    let adjoint = AdjointMode {
        value: adj_values[adj_index],
        positive_fraction: if total > 0.0 { positive / total } else { 0.0 },
        raw_pairing: raw_pairing.abs(),
        psi,
    };
    let range_u_prime = RangeTest {
        inner_product: op.pairing(&adjoint.psi, &u_prime),
        residual: simplicity_residual,
    };

    let injectivity = INJECTIVITY_FREQUENCIES
        .iter()
        .map(|&eta| injectivity_check(op, eta))
        .collect::<Result<Vec<_>>>()?;
    let leftmost = eigenvalues
        .iter()
        .map(|e| e.value)
        .min_by(|a, b| a.re.total_cmp(&b.re))
        .expect("operator is non-empty");
    let unstable = eigenvalues
        .iter()
        .enumerate()
        .filter(|(k, e)| *k != index && e.value.re > 1e-4 * norm)
        .map(|(_, e)| e.value)
        .collect();

    Ok(SpectrumReport {
        grid,
        eigenvalues,
        norm,
        trace: op.trace(),
        zero_mode: ZeroMode {
            index,
            value: lambda0,
            relative_modulus: lambda0.norm() / norm,
            cosine,
            simplicity_residual,
        },
        adjoint,
        regions,
        range_u_prime,
        injectivity,
        leftmost,
        unstable,
        u_prime,
        vectors: Some(vectors),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifiedEigenvalue {
    pub value: Complex64,
    pub delocalized: bool,
    pub in_strip: bool,
    /// Localized and outside the strip.
    pub point_spectrum: bool,
    pub decay: Option<EnvelopeFit>,
    pub in_xi_theorem: bool,
    pub in_xi_appendix: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub margin: f64,
    pub strip: (f64, f64),
    pub entries: Vec<ClassifiedEigenvalue>,
    /// Delocalized eigenvalues outside the widened strip.
    pub strip_violations: Vec<Complex64>,
    pub point_spectrum: usize,
    pub zero_mode_decay: Option<EnvelopeFit>,
    pub xi_theorem_count: usize,
    pub xi_appendix_count: usize,
}

impl Classification {
    pub fn delocalized_inside_strip(&self) -> bool {
        self.strip_violations.is_empty()
    }
}

/// Decay of `|ψ|` away from the centre of the grid.
fn eigenvector_decay(vectors: &Mat<Complex64>, k: usize, grid: &Grid) -> Option<EnvelopeFit> {
    let n = vectors.nrows();
    let centre = grid.centre();
    let reach = (n - 1 - centre).min(centre);
    let mut ts = Vec::with_capacity(reach + 1);
    let mut mags = Vec::with_capacity(reach + 1);
    for j in 0..=reach {
        ts.push(grid.node(centre + j) - grid.node(centre));
        mags.push(vectors[(centre + j, k)].norm().max(vectors[(centre - j, k)].norm()));
    }
    let top = mags.iter().fold(0.0_f64, |m, x| m.max(*x));
    fit_envelope(&ts, &mags, 1e-12 * top, 0.8 * ts[reach])
}

/// Sorts the computed eigenvalues against the strip `[ι_, ι̅]` (widened by
/// `10h`) and the two variants of Ξ.
pub fn classify_vs_regions(report: &SpectrumReport, regions: &RegionReport) -> Classification {
    let margin = 10.0 * report.grid.spacing();
    let mut entries = Vec::with_capacity(report.eigenvalues.len());
    let mut strip_violations = Vec::new();
    for (k, e) in report.eigenvalues.iter().enumerate() {
        let in_strip = regions.in_strip(e.value, margin);
        let point_spectrum = !e.delocalized && !in_strip;
        if e.delocalized && !in_strip {
            strip_violations.push(e.value);
        }
        let decay = if point_spectrum {
            report.vectors.as_ref().and_then(|v| eigenvector_decay(v, k, &report.grid))
        } else {
            None
        };
        entries.push(ClassifiedEigenvalue {
            value: e.value,
            delocalized: e.delocalized,
            in_strip,
            point_spectrum,
            decay,
            in_xi_theorem: regions.in_xi_theorem(e.value),
            in_xi_appendix: regions.in_xi_appendix(e.value),
        });
    }
    let zero_mode_decay = report
        .vectors
        .as_ref()
        .and_then(|v| eigenvector_decay(v, report.zero_mode.index, &report.grid));
    Classification {
        margin,
        strip: (regions.iota_underbar, regions.iota_bar),
        point_spectrum: entries.iter().filter(|e| e.point_spectrum).count(),
        xi_theorem_count: entries.iter().filter(|e| e.in_xi_theorem).count(),
        xi_appendix_count: entries.iter().filter(|e| e.in_xi_appendix).count(),
        entries,
        strip_violations,
        zero_mode_decay,
    }
}

/// `‖Π_L U′‖∞` for the discrete `U′` with the ±1 ghosts.
pub fn zero_mode_defect(op: &LinearizedOperator, u: &[f64]) -> f64 {
    let up = discrete_derivative(op, u);
    op.apply(&up).iter().fold(0.0, |m, x| m.max(x.abs()))
}
