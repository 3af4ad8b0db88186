//! Finite-volume simulation and verification toolkit for two-species
//! cross-diffusion with Darcy pressure, advection and nonlocal interaction.

pub mod continuation;
pub mod diagnostics;
pub mod domain;
pub mod error;
pub mod model;
pub mod oracle;
pub mod scenarios;
pub mod solver;

pub use error::{Error, Result};

/// Crate version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
