//! Command-line front end for the `ncpla` library: config loading, the
//! `design`, `optimize`, `tradeoff` and `simulate` workflows, and their
//! CSV/JSON outputs.

pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;
pub mod output;

pub use config::{Config, Overrides};
pub use error::CliError;
