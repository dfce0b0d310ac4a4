//! Bayesian hierarchical Richards growth-curve models for panels of
//! cumulative count trajectories.

pub mod cli;
pub mod curve;
pub mod data;
pub mod diagnostics;
pub mod error;
pub mod evaluation;
pub mod gibbs;
pub mod inference;
pub mod model;
pub mod samplers;

pub use error::{Error, Result};
