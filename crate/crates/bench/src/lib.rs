//! Harness around `sttc_core` and the `sttc` command line. It streams a
//! test split with or without calibration and compares the two runs.

pub mod cli;
pub mod config;
pub mod error;
pub mod pipeline;
pub mod report;
pub mod synthspec;
pub mod verify;

pub use error::{CliError, CliResult};
