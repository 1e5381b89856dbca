//! Multi-type SIR epidemics on a dynamic stochastic block model.
//!
//! Edges between every pair of individuals switch on and off as independent
//! two-state Markov chains, and an infective transmits across an edge only
//! while it is on. The crate provides
//!
//! * [`params`]: model parameterization, `n`-dependent rates and the
//!   classification of scaling regimes,
//! * [`contact`]: interrupted-Poisson-process contact mathematics, finite-`n`
//!   and limiting contact kernels and their Laplace matrices,
//! * [`sim`]: the exact edge-resolved simulator and the fast equivalent
//!   contact-list simulator, plus outbreak conditioning,
//! * [`branching`]: Malthusian parameters, Perron vectors and extinction
//!   probabilities of the approximating branching processes,
//! * [`limit`]: the deterministic large-population limits (ODE systems,
//!   renewal equation, Laplace fixed point, final size),
//! * [`harness`]: ensemble experiments, alignment and convergence reports.

pub mod branching;
pub mod contact;
mod error;
pub mod harness;
pub mod limit;
pub mod linalg;
pub mod output;
pub mod params;
pub mod sim;
pub mod stats;

pub use error::{Error, Result};
