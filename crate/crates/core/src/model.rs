//! Model problems `(d, f, J)` and the built-in catalog.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{KernelSpec, KernelSummary};
use crate::nonlinearity::{NonlinearitySpec, NonlinearitySummary};

/// Linearization constants at the two equilibria:
/// `a± = f_r(±1, ±1)` and `b± = f_s(±1, ±1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumConstants {
    pub a_plus: f64,
    pub a_minus: f64,
    pub b_plus: f64,
    pub b_minus: f64,
}

impl EquilibriumConstants {
    /// `ι̅ = max{a⁺ + b⁺, a⁻ + b⁻}`.
    pub fn iota_bar(&self) -> f64 {
        (self.a_plus + self.b_plus).max(self.a_minus + self.b_minus)
    }

    /// `ι_ = min{a⁺ − b⁺, a⁻ − b⁻}`.
    pub fn iota_underbar(&self) -> f64 {
        (self.a_plus - self.b_plus).min(self.a_minus - self.b_minus)
    }
}

/// One of the two limiting states, `ξ → +∞` (state 1) or `ξ → −∞` (state −1).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    PlusInfinity,
    MinusInfinity,
}

impl Side {
    /// Limiting state `±1`.
    pub fn state(self) -> f64 {
        match self {
            Side::PlusInfinity => 1.0,
            Side::MinusInfinity => -1.0,
        }
    }
}

impl EquilibriumConstants {
    /// `(a, b)` on the given side.
    pub fn side(&self, side: Side) -> (f64, f64) {
        match side {
            Side::PlusInfinity => (self.a_plus, self.b_plus),
            Side::MinusInfinity => (self.a_minus, self.b_minus),
        }
    }
}

/// `∂u/∂t = d u_xx + f(u, J*u)` with stable states normalized to ±1.
#[derive(Debug, Clone)]
pub struct ModelProblem {
    name: String,
    d: f64,
    kernel: KernelSpec,
    nonlinearity: NonlinearitySpec,
    constants: EquilibriumConstants,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub name: String,
    pub d: f64,
    pub kernel: KernelSummary,
    pub nonlinearity: NonlinearitySummary,
    pub constants: EquilibriumConstants,
}

impl ModelProblem {
    pub fn new(
        name: impl Into<String>,
        d: f64,
        kernel: KernelSpec,
        nonlinearity: NonlinearitySpec,
    ) -> Result<Self> {
        if !(d >= 0.0 && d.is_finite()) {
            return Err(Error::Spec(format!("diffusion d must be finite and >= 0, got {d}")));
        }
        let constants = equilibrium_constants(&nonlinearity);
        Ok(Self {
            name: name.into(),
            d,
            kernel,
            nonlinearity,
            constants,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn d(&self) -> f64 {
        self.d
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn nonlinearity(&self) -> &NonlinearitySpec {
        &self.nonlinearity
    }

    pub fn constants(&self) -> EquilibriumConstants {
        self.constants
    }

    pub fn middle_zero(&self) -> f64 {
        self.nonlinearity.middle_zero()
    }

    pub fn summary(&self) -> ModelSummary {
        ModelSummary {
            name: self.name.clone(),
            d: self.d,
            kernel: self.kernel.summary(),
            nonlinearity: self.nonlinearity.summary(),
            constants: self.constants,
        }
    }

    /// Same model with a different diffusion coefficient.
    pub fn with_diffusion(&self, d: f64) -> Result<Self> {
        Self::new(self.name.clone(), d, self.kernel.clone(), self.nonlinearity.clone())
    }
}

/// Evaluates `a± = f_r(±1,±1)`, `b± = f_s(±1,±1)`.
pub fn equilibrium_constants(f: &NonlinearitySpec) -> EquilibriumConstants {
    EquilibriumConstants {
        a_plus: f.f_r(1.0, 1.0),
        a_minus: f.f_r(-1.0, -1.0),
        b_plus: f.f_s(1.0, 1.0),
        b_minus: f.f_s(-1.0, -1.0),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BuiltinModel {
    Neural,
    Ising,
    Phase,
}

impl BuiltinModel {
    pub const ALL: [BuiltinModel; 3] = [BuiltinModel::Neural, BuiltinModel::Ising, BuiltinModel::Phase];

    pub fn name(self) -> &'static str {
        match self {
            BuiltinModel::Neural => "neural",
            BuiltinModel::Ising => "ising",
            BuiltinModel::Phase => "phase",
        }
    }

    pub fn build(self) -> ModelProblem {
        let built = match self {
            BuiltinModel::Neural => NeuralParams::default().build(),
            BuiltinModel::Ising => IsingParams::default().build(),
            BuiltinModel::Phase => PhaseParams::default().build(),
        };
        built.expect("catalog defaults are valid")
    }
}

impl fmt::Display for BuiltinModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BuiltinModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "neural" => Ok(BuiltinModel::Neural),
            "ising" => Ok(BuiltinModel::Ising),
            "phase" => Ok(BuiltinModel::Phase),
            other => Err(Error::Catalog(other.to_string())),
        }
    }
}

/// Looks up a catalog model by name.
pub fn builtin_model(name: &str) -> Result<ModelProblem> {
    Ok(name.parse::<BuiltinModel>()?.build())
}

// Catalog parameters. The kernels are wide enough that the tail decay
// rates sit near 0.55, so the exponential tails stay well above round-off
// across the whole interval ξ ∈ [12, 32].

/// Family of neurons: `u_t = -u + J*S(u)` written as `f(r, s) = -r + S(s)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NeuralParams {
    pub gain: f64,
    pub d: f64,
    pub sigma: f64,
}

impl Default for NeuralParams {
    fn default() -> Self {
        Self {
            gain: 2.0,
            d: 0.0,
            sigma: 3.0,
        }
    }
}

impl NeuralParams {
    pub fn build(&self) -> Result<ModelProblem> {
        ModelProblem::new(
            "neural",
            self.d,
            KernelSpec::gaussian(self.sigma)?,
            NonlinearitySpec::neural(self.gain)?,
        )
    }
}

/// Ising mean field with a compactly supported interaction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IsingParams {
    pub beta: f64,
    pub field: f64,
    pub d: f64,
    pub radius: f64,
}

impl Default for IsingParams {
    fn default() -> Self {
        Self {
            beta: 2.0,
            field: 0.0,
            d: 0.0,
            radius: 10.0,
        }
    }
}

impl IsingParams {
    pub fn build(&self) -> Result<ModelProblem> {
        ModelProblem::new(
            "ising",
            self.d,
            KernelSpec::bump(self.radius)?,
            NonlinearitySpec::ising(self.beta, self.field)?,
        )
    }
}

/// Phase transition `u_t = ε(J*u − u) + g(u)`.
///
/// The default `ε = 2` exceeds `max g' = 1`, which keeps `f_r < 0` on
/// `[-1, 1]²`; without diffusion a smaller ε gives discontinuous standing
/// fronts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseParams {
    pub epsilon: f64,
    pub detune: f64,
    pub d: f64,
    pub sigma: f64,
}

impl Default for PhaseParams {
    fn default() -> Self {
        Self {
            epsilon: 2.0,
            detune: 0.0,
            d: 0.0,
            sigma: 2.0,
        }
    }
}

impl PhaseParams {
    pub fn build(&self) -> Result<ModelProblem> {
        ModelProblem::new(
            "phase",
            self.d,
            KernelSpec::gaussian(self.sigma)?,
            NonlinearitySpec::phase(self.epsilon, self.detune)?,
        )
    }
}
