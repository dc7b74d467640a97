//! Decoupled, mass- and positivity-preserving, energy-stable Fourier
//! pseudo-spectral solver for the Poisson–Nernst–Planck–Navier–Stokes system
//! on the periodic square (0, 2π)².
//!
//! One time step runs three stages:
//!
//! 1. [`pnp`]: a coupled nonlinear solve for the ion concentrations and the
//!    electric potential with frozen, Δt-augmented mobilities;
//! 2. [`ns`]: an implicit convection–diffusion solve for an intermediate velocity;
//! 3. [`ns::project_velocity`]: a pressure-correction projection.
//!
//! [`integrator`] strings the stages into a time march and records the
//! per-step invariants, [`mms`] provides the manufactured-solution harness,
//! and [`io`] handles configuration files, CSV output and binary snapshots.

pub mod error;
pub mod field;
pub mod integrator;
pub mod io;
pub mod krylov;
pub mod mms;
pub mod ns;
pub mod par;
pub mod pnp;
pub mod spectral;
pub mod state;

pub use error::{Error, Result};
pub use field::{Grid, ScalarField, VectorField};
pub use par::Execution;
pub use spectral::{Spectral, SpectralCoeffs};
pub use state::{EnergyBreakdown, PhysParams, SchemeConfig, SimState, StepDiagnostics};
