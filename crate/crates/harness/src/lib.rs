//! Experiment runner for the atacom environments: TOML configs, seeded
//! parallel rollouts, parameter sweeps, CSV/JSON artifacts and the
//! acceptance battery.

pub mod battery;
pub mod config;
pub mod error;
pub mod output;
pub mod runner;
pub mod sweep;

pub use config::ExperimentConfig;
pub use error::{HarnessError, Result};
pub use runner::{run_experiment, Summary};
