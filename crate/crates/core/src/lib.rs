//! Simulation and inference for adaptive two-arm and contextual bandit
//! experiments under local alternatives.
//!
//! The crate simulates finite-horizon experiments and their diffusion limits
//! with shared sampling rules, computes post-experiment test statistics from
//! terminal sufficient statistics, and runs Monte Carlo size, power and
//! distribution comparisons.

pub mod config;
pub mod error;
pub mod linalg;
pub mod mc;
pub mod numeric;
pub mod policy_cmab;
pub mod policy_mab;
pub mod rng;
pub mod sim_finite;
pub mod sim_limit;
pub mod stats;

pub use config::{Centering, ContextDistribution, ExperimentConfig, Innovation, LocalParams};
pub use error::{Error, Result};
pub use rng::RngStream;
