//! Langevin Monte Carlo Thompson sampling for contextual bandits, with the
//! baseline policies, environments and experiment harness used to evaluate it.

pub mod agents;
pub mod diagnostics;
pub mod domain;
pub mod envs;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod models;
pub mod rng;
pub mod sampler;

pub use error::{Error, Result};
