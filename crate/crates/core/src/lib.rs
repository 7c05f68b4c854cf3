//! Heat-content functionals of isotropic α-stable processes: transition
//! kernels, domain geometry, path sampling, Monte Carlo and quadrature
//! estimators, and small-time limit checks.

pub mod asymptotics;
pub mod cli;
pub mod error;
pub mod estimate;
pub mod functionals;
pub mod geometry;
pub mod kernel;
pub mod output;
pub mod quad;
pub mod sampler;
pub mod special;
pub mod stats;

pub use error::{Error, Result};
pub use estimate::Estimate;
