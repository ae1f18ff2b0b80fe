//! Simulation and verification laboratory for mean-field fluctuations on the
//! flat torus.
//!
//! The crate couples four numerical pipelines that share one spectral
//! representation ([`spectral::SpectralField`]):
//!
//! * [`particles`]: Euler–Maruyama for the N-particle system with
//!   convolution drift, including Biot–Savart and Coulomb kernels.
//! * [`meanfield`]: pseudo-spectral Fokker–Planck solver for the limit law.
//! * [`spde`]: Galerkin integrator for the linear fluctuation SPDE.
//! * [`experiments`]: weak-error curves, rate fits, CLT baselines and
//!   modulated-energy decay.
//!
//! [`functionals`] supplies cylindrical test functionals and both generator
//! evaluations; [`cli`] wires everything to the `fluctlab` binary.

pub mod cli;
pub mod error;
pub mod experiments;
pub mod functionals;
pub mod kernels;
pub mod meanfield;
pub mod particles;
pub mod rng;
pub mod spde;
pub mod spectral;
pub mod stats;

pub use error::{Error, Result};
pub use num_complex::Complex64;
