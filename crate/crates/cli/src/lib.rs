//! Scenario files, reports and subcommands for the `dosr` binary.

pub mod commands;
pub mod error;
pub mod output;
pub mod scenario;
pub mod schema;

pub use error::{CliError, CliResult};
