//! Configuration, commands and the acceptance suite behind the `twotemp`
//! binary.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;
pub mod verify;

pub use config::{RunConfig, TaskKind};
pub use error::{CliError, CliResult};
