//! Simulation engine for cat-state manifolds stabilized by two-photon
//! dissipation, the Zeno-driven parity oscillations inside them, and the
//! calibration sweeps around them.
//!
//! Units: angular frequencies in rad/us, times in us, hbar = 1. See
//! [`units`] for the MHz conversions used at the config boundary.

pub mod cli;
pub mod config;
pub mod error;
pub mod evolve;
pub mod experiment;
pub mod expm;
pub mod fit;
pub mod fock;
pub mod model;
pub mod tomography;
pub mod units;
pub mod validation;

mod sparse;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;
