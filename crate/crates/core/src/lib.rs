//! Likelihood-free sampling with ABC-SMC and delayed-acceptance ABC-SMC.
//!
//! The crate is `no_std` (it needs `alloc`). Everything here is pure
//! computation over caller-supplied random streams: particle bookkeeping,
//! stratified resampling, adaptive tolerance selection, the MCMC move
//! kernels, the two SMC drivers, and three simulator models (a Gaussian toy,
//! Lotka-Volterra via Gillespie / chemical Langevin, and a latent Ising
//! field). File formats, configuration and the command line live in the
//! `dasmc` crate.
//!
//! Distances are compared against tolerances through a single predicate,
//! [`within_tolerance`], so the boundary convention is defined in one place.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod adapt;
pub mod diagnostics;
pub mod engine;
mod error;
pub mod kernel;
pub mod linalg;
mod math;
pub mod model;
pub mod models;
pub mod particle;
pub mod resample;
pub mod rng;

pub use error::Error;
pub use particle::within_tolerance;

pub type Result<T, E = Error> = core::result::Result<T, E>;
