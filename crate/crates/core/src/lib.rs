//! Slow-fast predator-prey model with a singular-Hopf normal form and a
//! moving-average early-warning scan for extinction.

pub mod bifurcation;
pub mod error;
pub mod ews;
pub mod integrator;
pub mod linalg;
pub mod model;
pub mod normal_form;
pub mod signal;

pub use error::{Error, Result};
pub use model::{EquilibriumKind, ModelParams, SlowFastModel, State};
pub use normal_form::{NFState, NormalFormCoeffs};
