//! Gaussian-process priors induced by infinitely wide fully-connected
//! networks: the layerwise kernel recursion, exact GP and kernel ridge
//! regression with that kernel, and finite-width Monte Carlo checks of the
//! infinite-width limit and of two-layer (Barron) networks.

pub mod activation;
pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod finite_width;
pub mod gauss_expect;
pub mod kernel;
pub mod par;
pub mod regress;
pub mod rng;
pub mod stats;

pub use activation::ActivationKind;
pub use error::{Error, Result};
