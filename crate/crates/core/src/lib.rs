//! Simulation laboratory for the stochastic reaction-diffusion equation
//! `d_t psi = d_x^2 psi + V(psi) + lambda sigma(psi) W'` on the periodic
//! interval `[-1, 1)`, driven by space-time white noise.
//!
//! The modules build on one another: [`torus_field`] and [`heat_kernel`] fix
//! the geometry, [`reaction`] and [`noise`] the coefficients, [`solver`] the
//! time stepping. [`couplings`], [`chain`] and [`ergodics`] run the
//! experiments on top of the solver, [`appendix_kit`] validates the auxiliary
//! probability estimates, and [`cli`] drives all of it from flat config
//! files.

pub mod appendix_kit;
pub mod chain;
pub mod cli;
pub mod config;
pub mod couplings;
pub mod ergodics;
pub mod error;
pub mod heat_kernel;
pub mod noise;
pub mod quad;
pub mod reaction;
pub mod solver;
pub mod spectral;
pub mod stats;
pub mod torus_field;

pub use error::{Error, Result};
