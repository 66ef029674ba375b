//! Simulation and verification toolkit for the Mott variable-range hopping
//! random walk in a random environment.
//!
//! The crate is organised by concern:
//!
//! * [`env`] samples marked point environments (Poisson, diluted crystals,
//!   their Palm versions) and estimates Palm expectations.
//! * [`walk`] holds the hopping rates and the kinetic Monte Carlo engine.
//! * [`percolation`] does Boolean-model and graph cluster analysis.
//! * [`bounds`] evaluates variational upper bounds on the diffusion matrix.
//! * [`domination`] builds and checks stochastic-domination couplings.
//! * [`experiments`] and [`config`] drive the command-line experiments.

pub mod bounds;
pub mod config;
pub mod domination;
pub mod env;
pub mod experiments;
pub mod error;
pub mod geometry;
pub mod percolation;
pub mod rng;
pub mod stats;
pub mod walk;

pub use error::{Error, Result};
