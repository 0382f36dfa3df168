//! Principal-stratification causal inference engine.
//!
//! The crate is organized around the analysis pipeline:
//!
//! - [`data`]: CSV ingestion into typed columns.
//! - [`formula`]: R-style model formulas and design matrices.
//! - [`strata`]: the strata/ER mini-language and the algebra of principal
//!   strata (the map `D(s, z)`, compatibility sets, parameter-cell
//!   collapsing).
//! - [`model`]: the joint log-posterior of the multinomial S-model and the
//!   per-cell Y-model (GLM, survival, or multilevel), with exact gradients.
//! - [`sampler`]: a native NUTS sampler with dual-averaging step-size and
//!   diagonal mass-matrix adaptation, plus convergence diagnostics.
//! - [`posterior`]: stratum proportions, potential-outcome means, survival
//!   curves, nested contrasts, and summary tables.
//! - [`mrweight`]: the frequentist principal-score weighting path.
//! - [`simgen`]: seed-controlled simulation designs used by the test suite
//!   and the CLI.
//! - [`cli`]: the config-driven batch front door.

pub mod cli;
pub mod data;
pub mod error;
pub mod family;
pub mod formula;
pub mod math;
pub mod model;
pub mod mrweight;
pub mod posterior;
pub mod prior;
mod rcall;
pub mod sampler;
pub mod simgen;
pub mod strata;

pub use error::{Error, Result};
