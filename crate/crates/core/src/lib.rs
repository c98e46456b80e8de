//! Traveling fronts of bistable nonlocal reaction equations
//! `u_t = d u_xx + f(u, J*u)`.

pub mod asymptotics;
pub mod charfn;
pub mod error;
pub mod greens;
pub mod grid;
pub mod hypotheses;
pub mod kernel;
pub mod model;
pub mod modelfile;
pub mod nonlinearity;
pub mod spectrum;
pub mod stats;
pub mod wave;

pub use error::{Error, NewtonStep, Result};
pub use kernel::KernelSpec;
pub use model::{builtin_model, BuiltinModel, EquilibriumConstants, ModelProblem};
pub use nonlinearity::NonlinearitySpec;
