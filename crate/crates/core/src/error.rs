use num_complex::Complex64;
use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the numerical pipeline can report.
///
/// Variants are grouped by how a caller should react: configuration and
/// input problems (`Catalog`, `Spec`, `Parse`, `Io`, `Grid`, `Size`) are
/// usage errors; everything else is a numerical or quality failure.
#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown model `{0}` (expected one of: neural, ising, phase)")]
    Catalog(String),

    #[error("invalid specification: {0}")]
    Spec(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("hypothesis violated: {0}")]
    Hypothesis(String),

    #[error("kernel transform diverges at z = {z}")]
    TransformDivergence { z: Complex64 },

    #[error("no sign change found for |z| <= {limit}")]
    Divergence { limit: f64 },

    #[error("characteristic function nearly vanishes on the contour (min |Δ| = {min_modulus:e} at z = {at})")]
    Contour { min_modulus: f64, at: Complex64 },

    #[error("winding number {value} is not close to an integer; enlarge im_max or refine")]
    Accuracy { value: f64 },

    #[error("operator is not hyperbolic: |Δ(iη)| = {min_modulus:e} at η = {eta}")]
    Hyperbolicity { eta: f64, min_modulus: f64 },

    #[error("Green's function does not decay inside the window (boundary value {boundary_value:e}); enlarge L_G")]
    Window { boundary_value: f64 },

    #[error("grid too coarse to resolve the jump (extrapolants differ by {disagreement:e})")]
    Resolution { disagreement: f64 },

    #[error("incompatible grids: {0}")]
    Grid(String),

    #[error("perturbation too large: ε = {epsilon:e} exceeds contraction threshold {threshold:e}")]
    PerturbationTooLarge { epsilon: f64, threshold: f64 },

    #[error("problem size {requested} exceeds the dense cap {cap}")]
    Size { requested: usize, cap: usize },

    #[error("Newton iteration stalled after {} iterations (last residual {:e})", trace.len(), trace.last().map(|t| t.residual).unwrap_or(f64::NAN))]
    Convergence { trace: Vec<NewtonStep> },

    #[error("solution is not monotone (min slope {min_slope:e} at ξ = {at})")]
    Monotonicity { min_slope: f64, at: f64 },

    #[error("fit window reaches the floating-point floor (1∓U = {value:e} at ξ = {at})")]
    UnderflowWindow { value: f64, at: f64 },

    #[error("fit window [{lo}, {hi}] violates the window policy: {reason}")]
    WindowPolicy { lo: f64, hi: f64, reason: String },

    #[error("log-linear fit rejected: R² = {r_squared} below {threshold}")]
    FitQuality { r_squared: f64, threshold: f64 },

    #[error("runs disagree: speed spread {speed_spread:e}, profile spread {profile_spread:e}")]
    NonUnique {
        speed_spread: f64,
        profile_spread: f64,
    },

    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    /// Exit-code class: 2 for usage/configuration, 1 for numerical failures.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::Catalog(_)
                | Error::Spec(_)
                | Error::Parse(_)
                | Error::Io { .. }
                | Error::Grid(_)
                | Error::Size { .. }
        )
    }

    pub(crate) fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

/// One Newton iteration, kept for diagnostics when a solve fails.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct NewtonStep {
    pub iteration: usize,
    pub residual: f64,
    pub damping: f64,
    pub speed: f64,
}
