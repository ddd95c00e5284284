//! Filesystem formats, the expert-iteration harness and the command-line
//! driver for `stepprover-core`.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod error;
pub mod harness;
pub mod io;
pub mod manifest;

pub use error::{CliError, Result};
