//! Configuration-driven runner for the `spde` command line tool.
//!
//! A run is described by an [`ExperimentConfig`]: a JSON file with command
//! line flags laid on top. [`run`] dispatches to the checker, solver or a
//! diagnostic and writes CSV tables plus `summary.json` under `out_dir`.

pub mod config;
pub mod output;
pub mod run;

pub use config::{load_config, Command, ConfigError, ConfigFile, ExperimentConfig, StateSpec};
pub use run::{
    run, run_with_threads, threads_from_env, Outcome, RunError, EXIT_BLOW_UP, EXIT_OK, EXIT_USAGE,
    EXIT_VIOLATIONS,
};
