//! Training, evaluation and ablation sweeps over the grid and block worlds,
//! driven by flat `key = value` settings.

pub mod cli;
pub mod config;
pub mod error;
pub mod run;
pub mod sweep;

pub use error::{HarnessError, Result};
