//! Command-line front end for `mdpgeo`.

pub mod commands;
pub mod error;
pub mod files;

pub use commands::{run, Cli};
pub use error::CliError;
pub use files::{MdpFile, TraceRow};
