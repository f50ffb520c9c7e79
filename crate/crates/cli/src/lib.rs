//! Command-line front end for the `ionxy` library.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

pub use commands::{CommandKind, PaperFig};
pub use error::CliError;
