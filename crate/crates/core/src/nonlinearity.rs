//! Reaction terms `f(r, s)`, where `r` is the local state and `s = J*u`.

use std::fmt;

use evalexpr::{ContextWithMutableVariables, DefaultNumericTypes, HashMapContext, Node, Value};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Primary finite-difference step for partial derivatives.
pub const FD_STEP: f64 = 1e-6;
/// Secondary step used to detect a poor primary estimate.
pub const FD_SECONDARY_STEP: f64 = 1e-5;
/// Disagreement between the two steps that triggers Richardson refinement.
pub const FD_DISAGREEMENT: f64 = 1e-6;

/// Affine map `u = offset + scale·ũ` taking the normalized states ±1 to
/// the physical stable equilibria.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineRescale {
    pub offset: f64,
    pub scale: f64,
}

impl AffineRescale {
    pub const IDENTITY: Self = Self {
        offset: 0.0,
        scale: 1.0,
    };

    pub fn to_physical(&self, u: f64) -> f64 {
        self.offset + self.scale * u
    }
}

#[derive(Clone)]
pub enum NonlinearityKind {
    /// `f = -r + S(s)` with the algebraic sigmoid
    /// `S(s) = s√(1+k²)/√(1+k²s²)`, which fixes `S(±1) = ±1`.
    Neural { gain: f64 },
    /// Ising mean field `u_t = tanh(β(J*u + h)) - u` after rescaling the two
    /// stable equilibria to ±1.
    Ising {
        beta: f64,
        field: f64,
        rescale: AffineRescale,
    },
    /// `f = ε(s - r) + g(r)` with `g(r) = r - r³ + δ(1 - r²)`.
    Phase { epsilon: f64, detune: f64 },
    /// User expression in the variables `r` and `s`.
    Expression { source: String, tree: Node<DefaultNumericTypes> },
}

impl fmt::Debug for NonlinearityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Neural { gain } => f.debug_struct("Neural").field("gain", gain).finish(),
            Self::Ising {
                beta,
                field,
                rescale,
            } => f
                .debug_struct("Ising")
                .field("beta", beta)
                .field("field", field)
                .field("rescale", rescale)
                .finish(),
            Self::Phase { epsilon, detune } => f
                .debug_struct("Phase")
                .field("epsilon", epsilon)
                .field("detune", detune)
                .finish(),
            Self::Expression { source, .. } => {
                f.debug_struct("Expression").field("source", source).finish()
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct NonlinearitySpec {
    kind: NonlinearityKind,
    middle_zero: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonlinearitySummary {
    pub kind: String,
    pub parameters: Vec<(String, f64)>,
    pub expression: Option<String>,
    pub middle_zero: f64,
    pub rescale: Option<AffineRescale>,
}

impl NonlinearitySpec {
    pub fn neural(gain: f64) -> Result<Self> {
        if !(gain > 0.0) {
            return Err(Error::Spec(format!("neural gain must be positive, got {gain}")));
        }
        Ok(Self {
            kind: NonlinearityKind::Neural { gain },
            middle_zero: 0.0,
        })
    }

    /// Ising mean-field nonlinearity; requires `β > 1` and a field weak
    /// enough that three equilibria exist.
    pub fn ising(beta: f64, field: f64) -> Result<Self> {
        let (low, mid, high) = ising_equilibria(beta, field)?;
        let rescale = AffineRescale {
            offset: 0.5 * (high + low),
            scale: 0.5 * (high - low),
        };
        Ok(Self {
            kind: NonlinearityKind::Ising {
                beta,
                field,
                rescale,
            },
            middle_zero: (mid - rescale.offset) / rescale.scale,
        })
    }

    pub fn phase(epsilon: f64, detune: f64) -> Result<Self> {
        if !(epsilon > 0.0) {
            return Err(Error::Spec(format!("phase epsilon must be positive, got {epsilon}")));
        }
        if !(detune.abs() < 1.0) {
            return Err(Error::Spec(format!("phase detune must lie in (-1, 1), got {detune}")));
        }
        Ok(Self {
            kind: NonlinearityKind::Phase { epsilon, detune },
            middle_zero: -detune,
        })
    }

    /// Parses an expression in `r` and `s` (for example `0.1*(s - r) + r - r^3`).
    /// When `middle_zero` is absent it is located on `(-1, 1)`.
    pub fn expression(source: &str, middle_zero: Option<f64>) -> Result<Self> {
        let tree = evalexpr::build_operator_tree::<DefaultNumericTypes>(source)
            .map_err(|e| Error::Parse(format!("nonlinearity `{source}`: {e}")))?;
        let mut spec = Self {
            kind: NonlinearityKind::Expression {
                source: source.to_string(),
                tree,
            },
            middle_zero: 0.0,
        };
        // Probe once so malformed expressions fail at load, not mid-solve.
        let probe = spec.try_value(0.25, -0.5)?;
        if !probe.is_finite() {
            return Err(Error::Parse(format!("nonlinearity `{source}` is not finite at (0.25, -0.5)")));
        }
        spec.middle_zero = match middle_zero {
            Some(q) => q,
            None => spec.locate_middle_zero(),
        };
        Ok(spec)
    }

    pub fn kind(&self) -> &NonlinearityKind {
        &self.kind
    }

    pub fn middle_zero(&self) -> f64 {
        self.middle_zero
    }

    pub fn rescale(&self) -> Option<AffineRescale> {
        match self.kind {
            NonlinearityKind::Ising { rescale, .. } => Some(rescale),
            _ => None,
        }
    }

    pub fn has_closed_form_partials(&self) -> bool {
        !matches!(self.kind, NonlinearityKind::Expression { .. })
    }

    pub fn summary(&self) -> NonlinearitySummary {
        let (kind, parameters, expression) = match &self.kind {
            NonlinearityKind::Neural { gain } => ("neural", vec![("gain".into(), *gain)], None),
            NonlinearityKind::Ising { beta, field, .. } => (
                "ising",
                vec![("beta".into(), *beta), ("field".into(), *field)],
                None,
            ),
            NonlinearityKind::Phase { epsilon, detune } => (
                "phase",
                vec![("epsilon".into(), *epsilon), ("detune".into(), *detune)],
                None,
            ),
            NonlinearityKind::Expression { source, .. } => {
                ("expression", Vec::new(), Some(source.clone()))
            }
        };
        NonlinearitySummary {
            kind: kind.into(),
            parameters,
            expression,
            middle_zero: self.middle_zero,
            rescale: self.rescale(),
        }
    }

    /// `f(r, s)`. Expression evaluation failures surface as NaN.
    pub fn value(&self, r: f64, s: f64) -> f64 {
        match &self.kind {
            NonlinearityKind::Neural { gain } => -r + algebraic_sigmoid(*gain, s),
            NonlinearityKind::Ising {
                beta,
                field,
                rescale,
            } => {
                let arg = beta * (rescale.to_physical(s) + field);
                (arg.tanh() - rescale.to_physical(r)) / rescale.scale
            }
            NonlinearityKind::Phase { epsilon, detune } => {
                epsilon * (s - r) + r - r * r * r + detune * (1.0 - r * r)
            }
            NonlinearityKind::Expression { .. } => self.try_value(r, s).unwrap_or(f64::NAN),
        }
    }

    fn try_value(&self, r: f64, s: f64) -> Result<f64> {
        let NonlinearityKind::Expression { source, tree } = &self.kind else {
            return Ok(self.value(r, s));
        };
        let mut ctx = HashMapContext::<DefaultNumericTypes>::new();
        ctx.set_value("r".into(), Value::Float(r))
            .and_then(|_| ctx.set_value("s".into(), Value::Float(s)))
            .map_err(|e| Error::Parse(format!("nonlinearity `{source}`: {e}")))?;
        match tree.eval_with_context(&ctx) {
            Ok(Value::Float(v)) => Ok(v),
            Ok(Value::Int(v)) => Ok(v as f64),
            Ok(other) => Err(Error::Parse(format!(
                "nonlinearity `{source}` evaluated to non-number {other:?}"
            ))),
            Err(e) => Err(Error::Parse(format!("nonlinearity `{source}`: {e}"))),
        }
    }

    /// `∂f/∂r`: closed form when available, otherwise finite differences.
    pub fn f_r(&self, r: f64, s: f64) -> f64 {
        match &self.kind {
            NonlinearityKind::Neural { .. } | NonlinearityKind::Ising { .. } => -1.0,
            NonlinearityKind::Phase { epsilon, detune } => -epsilon + 1.0 - 3.0 * r * r - 2.0 * detune * r,
            NonlinearityKind::Expression { .. } => self.fd_f_r(r, s),
        }
    }

    /// `∂f/∂s`: closed form when available, otherwise finite differences.
    pub fn f_s(&self, r: f64, s: f64) -> f64 {
        match &self.kind {
            NonlinearityKind::Neural { gain } => algebraic_sigmoid_derivative(*gain, s),
            NonlinearityKind::Ising {
                beta,
                field,
                rescale,
            } => {
                let t = (beta * (rescale.to_physical(s) + field)).tanh();
                beta * (1.0 - t * t)
            }
            NonlinearityKind::Phase { epsilon, .. } => *epsilon,
            NonlinearityKind::Expression { .. } => self.fd_f_s(r, s),
        }
    }

    /// Finite-difference `∂f/∂r`, available for every kind.
    pub fn fd_f_r(&self, r: f64, s: f64) -> f64 {
        refined_central_difference(|x| self.value(x, s), r)
    }

    /// Finite-difference `∂f/∂s`, available for every kind.
    pub fn fd_f_s(&self, r: f64, s: f64) -> f64 {
        refined_central_difference(|x| self.value(r, x), s)
    }

    /// `f̄(u) = f(u, u)`.
    pub fn diagonal(&self, u: f64) -> f64 {
        self.value(u, u)
    }

    /// `f̄'(u) = f_r(u,u) + f_s(u,u)`.
    pub fn diagonal_derivative(&self, u: f64) -> f64 {
        self.f_r(u, u) + self.f_s(u, u)
    }

    fn locate_middle_zero(&self) -> f64 {
        let samples = 2001;
        let xs: Vec<f64> = (0..samples)
            .map(|k| -1.0 + 2.0 * k as f64 / (samples - 1) as f64)
            .collect();
        let vals: Vec<f64> = xs.iter().map(|&x| self.diagonal(x)).collect();
        let mut candidates = Vec::new();
        for k in 1..samples - 1 {
            if vals[k] == 0.0 {
                candidates.push(xs[k]);
            } else if vals[k] * vals[k + 1] < 0.0 && k + 1 < samples - 1 {
                let (mut lo, mut hi) = (xs[k], xs[k + 1]);
                let flo = vals[k];
                for _ in 0..80 {
                    let mid = 0.5 * (lo + hi);
                    if self.diagonal(mid) * flo > 0.0 {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                candidates.push(0.5 * (lo + hi));
            }
        }
        candidates
            .into_iter()
            .min_by(|a, b| a.abs().total_cmp(&b.abs()))
            .unwrap_or(0.0)
    }
}

fn algebraic_sigmoid(gain: f64, s: f64) -> f64 {
    s * (1.0 + gain * gain).sqrt() / (1.0 + gain * gain * s * s).sqrt()
}

fn algebraic_sigmoid_derivative(gain: f64, s: f64) -> f64 {
    (1.0 + gain * gain).sqrt() / (1.0 + gain * gain * s * s).powf(1.5)
}

/// Central difference with step `FD_STEP`, refined by Richardson
/// extrapolation against `FD_SECONDARY_STEP` when the two disagree.
pub fn refined_central_difference(f: impl Fn(f64) -> f64, x: f64) -> f64 {
    let central = |h: f64| (f(x + h) - f(x - h)) / (2.0 * h);
    let fine = central(FD_STEP);
    let coarse = central(FD_SECONDARY_STEP);
    if (fine - coarse).abs() > FD_DISAGREEMENT {
        let ratio = (FD_SECONDARY_STEP / FD_STEP).powi(2);
        (ratio * fine - coarse) / (ratio - 1.0)
    } else {
        fine
    }
}

/// Equilibria `m₋ < m₀ < m₊` of `m = tanh(β(m + h))`.
fn ising_equilibria(beta: f64, field: f64) -> Result<(f64, f64, f64)> {
    if !(beta > 1.0) {
        return Err(Error::Spec(format!("ising beta must exceed 1, got {beta}")));
    }
    let phi = |m: f64| (beta * (m + field)).tanh() - m;
    // φ' = 0 where sech²(β(m+h)) = 1/β.
    let turn = (beta.sqrt()).acosh() / beta;
    let (c1, c2) = (-turn - field, turn - field);
    if !(phi(c1) < 0.0 && phi(c2) > 0.0) {
        return Err(Error::Spec(format!(
            "ising field {field} too strong for beta {beta}: fewer than three equilibria"
        )));
    }
    let bisect = |mut lo: f64, mut hi: f64| {
        let flo = phi(lo);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if phi(mid) * flo > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    };
    Ok((bisect(-1.0, c1), bisect(c1, c2), bisect(c2, 1.0)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ising_fixed_point_matches_bisection_oracle() {
        // Independent bisection on tanh(2m) = m over (0.5, 1).
        let mut lo = 0.5_f64;
        let mut hi = 1.0_f64;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if (2.0 * mid).tanh() - mid > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let m_star = 0.5 * (lo + hi);
        assert!((m_star - 0.9575).abs() < 1e-4);
        let f = NonlinearitySpec::ising(2.0, 0.0).unwrap();
        let rescale = f.rescale().unwrap();
        assert!((rescale.scale - m_star).abs() < 1e-12);
        assert!(rescale.offset.abs() < 1e-14);
        assert!(f.value(1.0, 1.0).abs() < 1e-10);
        assert!(f.value(-1.0, -1.0).abs() < 1e-10);
        assert!(f.middle_zero().abs() < 1e-12);
        let b = 2.0 * (1.0 - (2.0 * m_star).tanh().powi(2));
        assert!((f.f_s(1.0, 1.0) - b).abs() < 1e-10);
    }

    #[test]
    fn ising_with_field_is_rescaled_to_unit_states() {
        let f = NonlinearitySpec::ising(2.0, 0.05).unwrap();
        assert!(f.value(1.0, 1.0).abs() < 1e-10);
        assert!(f.value(-1.0, -1.0).abs() < 1e-10);
        let q = f.middle_zero();
        assert!(q > -1.0 && q < 1.0);
        assert!(f.value(q, q).abs() < 1e-10);
        assert!(NonlinearitySpec::ising(2.0, 0.9).is_err());
        assert!(NonlinearitySpec::ising(0.8, 0.0).is_err());
    }

    #[test]
    fn phase_equilibria_and_partials() {
        let f = NonlinearitySpec::phase(0.1, 0.0).unwrap();
        assert_eq!(f.value(1.0, 1.0), 0.0);
        assert_eq!(f.value(-1.0, -1.0), 0.0);
        assert!((f.f_r(1.0, 1.0) + 2.1).abs() < 1e-12);
        assert!((f.f_s(1.0, 1.0) - 0.1).abs() < 1e-12);
        let detuned = NonlinearitySpec::phase(0.1, 0.1).unwrap();
        assert!((detuned.middle_zero() + 0.1).abs() < 1e-15);
        assert!(detuned.diagonal(-0.1).abs() < 1e-15);
    }

    #[test]
    fn neural_sigmoid_is_odd_with_unit_fixed_points() {
        let f = NonlinearitySpec::neural(2.0).unwrap();
        assert_eq!(f.middle_zero(), 0.0);
        for s in [0.1, 0.5, 0.9] {
            assert!((f.value(0.0, s) + f.value(0.0, -s)).abs() < 1e-15);
        }
        assert!(f.value(1.0, 1.0).abs() < 1e-15);
        assert!((f.f_s(1.0, 1.0) - 0.2).abs() < 1e-12);
    }

    #[test]
    fn closed_form_partials_agree_with_finite_differences() {
        let specs = [
            NonlinearitySpec::neural(2.0).unwrap(),
            NonlinearitySpec::ising(2.0, 0.03).unwrap(),
            NonlinearitySpec::phase(0.4, 0.2).unwrap(),
        ];
        for f in &specs {
            for &(r, s) in &[(-0.9, 0.3), (0.0, 0.0), (0.7, -0.6), (1.0, 1.0)] {
                assert!((f.f_r(r, s) - f.fd_f_r(r, s)).abs() < 1e-5, "{f:?}");
                assert!((f.f_s(r, s) - f.fd_f_s(r, s)).abs() < 1e-5, "{f:?}");
            }
        }
    }

    #[test]
    fn expression_matches_builtin_phase() {
        let e = NonlinearitySpec::expression("0.1*(s - r) + r - r^3", None).unwrap();
        let p = NonlinearitySpec::phase(0.1, 0.0).unwrap();
        for &(r, s) in &[(-0.9, 0.3), (0.2, 0.2), (0.7, -0.6)] {
            assert!((e.value(r, s) - p.value(r, s)).abs() < 1e-14);
            assert!((e.f_r(r, s) - p.f_r(r, s)).abs() < 1e-6);
            assert!((e.f_s(r, s) - p.f_s(r, s)).abs() < 1e-6);
        }
        assert!(e.middle_zero().abs() < 1e-12);
    }

    #[test]
    fn expression_errors_are_parse_errors() {
        assert!(matches!(
            NonlinearitySpec::expression("r + * s", None),
            Err(Error::Parse(_))
        ));
        assert!(matches!(
            NonlinearitySpec::expression("r + unknown_var", None),
            Err(Error::Parse(_))
        ));
    }

    #[test]
    fn richardson_refinement_kicks_in_for_rough_functions() {
        // Large third derivative makes the two steps disagree.
        let f = |x: f64| (50.0 * x).sin();
        let d = refined_central_difference(f, 0.3);
        assert!((d - 50.0 * (15.0_f64).cos()).abs() < 1e-5);
    }
}
