//! Model files in TOML.
//!
//! ```toml
//! name = "custom"
//! d = 0.0
//!
//! [kernel]
//! family = "gaussian"   # gaussian | laplace | bump | tabulated
//! sigma = 1.0
//!
//! [nonlinearity]
//! kind = "expression"   # neural | ising | phase | expression
//! expression = "2*(s - r) + r - r^3"
//! ```
//!
//! Unknown keys are rejected. A `mass` key on the kernel scales it, which is
//! only useful for exercising the hypothesis checks. Tabulated kernels take
//! either inline `abscissae`/`values` or a `file` of two numeric columns,
//! resolved relative to the model file.

use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::kernel::KernelSpec;
use crate::model::ModelProblem;
use crate::nonlinearity::NonlinearitySpec;

fn one() -> f64 {
    1.0
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    name: Option<String>,
    #[serde(default)]
    d: f64,
    kernel: KernelEntry,
    nonlinearity: NonlinearityEntry,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
enum KernelEntry {
    Gaussian {
        sigma: f64,
        #[serde(default = "one")]
        mass: f64,
    },
    Laplace {
        beta: f64,
        #[serde(default = "one")]
        mass: f64,
    },
    Bump {
        radius: f64,
        #[serde(default = "one")]
        mass: f64,
    },
    Tabulated {
        file: Option<String>,
        abscissae: Option<Vec<f64>>,
        values: Option<Vec<f64>>,
        #[serde(default = "one")]
        mass: f64,
    },
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum NonlinearityEntry {
    Neural {
        gain: f64,
    },
    Ising {
        beta: f64,
        #[serde(default)]
        field: f64,
    },
    Phase {
        epsilon: f64,
        #[serde(default)]
        detune: f64,
    },
    Expression {
        expression: String,
        middle_zero: Option<f64>,
    },
}

fn kernel(entry: KernelEntry, base: Option<&Path>) -> Result<KernelSpec> {
    let (spec, mass) = match entry {
        KernelEntry::Gaussian { sigma, mass } => (KernelSpec::gaussian(sigma)?, mass),
        KernelEntry::Laplace { beta, mass } => (KernelSpec::laplace(beta)?, mass),
        KernelEntry::Bump { radius, mass } => (KernelSpec::bump(radius)?, mass),
        KernelEntry::Tabulated {
            file,
            abscissae,
            values,
            mass,
        } => {
            let spec = match (file, abscissae, values) {
                (Some(file), None, None) => {
                    let path = match base {
                        Some(dir) => dir.join(&file),
                        None => file.into(),
                    };
                    KernelSpec::tabulated_from_file(&path)?
                }
                (None, Some(x), Some(y)) => KernelSpec::tabulated(&x, &y)?,
                _ => {
                    return Err(Error::Spec(
                        "tabulated kernel needs either `file` or both `abscissae` and `values`".into(),
                    ))
                }
            };
            (spec, mass)
        }
    };
    if !(mass.is_finite() && mass > 0.0) {
        return Err(Error::Spec(format!("kernel mass must be positive, got {mass}")));
    }
    Ok(if mass == 1.0 { spec } else { spec.with_mass(mass) })
}

fn nonlinearity(entry: NonlinearityEntry) -> Result<NonlinearitySpec> {
    match entry {
        NonlinearityEntry::Neural { gain } => NonlinearitySpec::neural(gain),
        NonlinearityEntry::Ising { beta, field } => NonlinearitySpec::ising(beta, field),
        NonlinearityEntry::Phase { epsilon, detune } => NonlinearitySpec::phase(epsilon, detune),
        NonlinearityEntry::Expression {
            expression,
            middle_zero,
        } => NonlinearitySpec::expression(&expression, middle_zero),
    }
}

/// Parses a model from TOML text; relative kernel files resolve against `base`.
pub fn parse_model(text: &str, base: Option<&Path>) -> Result<ModelProblem> {
    let file: ModelFile = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    let name = file.name.unwrap_or_else(|| "custom".to_string());
    ModelProblem::new(name, file.d, kernel(file.kernel, base)?, nonlinearity(file.nonlinearity)?)
}

pub fn load_model(path: &Path) -> Result<ModelProblem> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    parse_model(&text, path.parent()).map_err(|e| match e {
        Error::Parse(msg) => Error::Parse(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// A built-in name, or a path when the argument names an existing file or
/// looks like one (contains a separator or ends in `.toml`).
pub fn resolve_model(source: &str) -> Result<ModelProblem> {
    let path = Path::new(source);
    if path.is_file() || source.contains(std::path::MAIN_SEPARATOR) || source.contains('/') || source.ends_with(".toml") {
        load_model(path)
    } else {
        crate::model::builtin_model(source)
    }
}
