//! Rate-distortion training with a distortion-constrained objective.
//!
//! Models expose a rate `R` and a distortion `D`. The trainer minimizes `R`
//! subject to `D <= c_D` using a log-parameterized Lagrange multiplier, and the
//! same loop runs the fixed-weight hinge and `β` baselines for comparison.

pub mod config;
pub mod data;
pub mod error;
pub mod experiment;
pub mod loss;
pub mod math;
pub mod models;
pub mod multiplier;
pub mod optim;
pub mod oracles;
pub mod plot;
pub mod trainer;
pub mod verification;

pub use error::{Error, Result};
