//! Simulation and diagnostics for reflected Brownian motions in the positive orthant.

pub mod error;
pub mod harness;
pub mod cli;
pub mod coupling;
pub mod derivative;
pub mod model;
pub mod seeds;
pub mod skorokhod;
pub mod stationary;
pub mod stats;

pub use error::{Error, Result};
