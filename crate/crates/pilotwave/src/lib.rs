//! A numerical pilot-wave laboratory.
//!
//! Wave functions evolve on periodic grids under the Schrodinger equation
//! (split-operator or Crank-Nicolson); particle configurations ride the
//! guidance velocity field built from the probability current. On top of
//! that sit diagnostics (polar decomposition, quantum potential), ensemble
//! statistics (equivariance, quantum-equilibrium frequencies), measurement
//! pipelines (Stern-Gerlach, general pointer experiments), and subsystem
//! analysis (conditional and effective wave functions, collapse).
//!
//! Start with the runnable programs under `examples/`; each one exercises a
//! major capability end to end and prints what it verifies. The `pilotwave`
//! binary drives the same machinery from TOML scenario configs.

pub mod error;
pub mod grid;
pub mod guidance;
pub mod observables;
pub mod packets;
pub mod polar;
pub mod propagate;
pub mod scenario;
pub mod spectral;
pub mod statistics;
pub mod subsystem;
pub mod trajectory;

pub use error::{Error, Result};
