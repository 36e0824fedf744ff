//! Command-line front end: run configuration, presets and the subcommands.

// Negated comparisons are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod args;
pub mod commands;
pub mod config;
pub mod error;

pub use args::Cli;
pub use commands::run;
pub use config::{RunConfig, PRESETS, SNAPSHOT_FILE};
pub use error::CliError;
