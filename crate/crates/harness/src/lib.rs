//! Command line harness: scenario configs, Monte Carlo sweeps over fading,
//! CSV result tables and the verification suite behind the `bmec` binary.

pub mod config;
pub mod output;
pub mod sweep;
pub mod verify;

pub use config::{load_config, Config, ConfigError};
pub use output::{emit_csv, read_csv, write_csv, OutputError};
pub use sweep::{run_draws, run_sweep, solve, DrawRecord, ResultRow, SweepOptions, SweepSpec, SweepVariable};
