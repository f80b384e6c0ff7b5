//! Experiment runner for the ricci-tunnel library: strict TOML configs,
//! named presets, JSON reports and CSV data files.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod report;
pub mod run;

pub use config::{ExperimentConfig, ExperimentKind};
pub use error::CliError;
pub use report::{compare_baseline, Check, RunReport};
pub use run::run;

/// Worker count variable for the rayon pool.
pub const WORKERS_ENV: &str = "RICCI_TUNNEL_WORKERS";
