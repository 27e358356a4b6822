//! Library side of the `matclust` binary: settings, commands and the file
//! schemas of everything the commands write.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

pub use error::CliError;
