//! Numerical laboratory for reflected backward doubly stochastic differential
//! equations with Poisson jumps.

pub mod drivers;
pub mod dsl;
pub mod solver;
pub mod schemes;
pub mod analysis;
pub mod config;
pub mod runner;
mod error;

pub use error::{Error, Result};
