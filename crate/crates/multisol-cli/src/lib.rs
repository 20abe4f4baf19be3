//! Command-line front end: problem files in, profiles and certificates out.

pub mod commands;
pub mod config;
pub mod log;

pub use commands::{cmd_scan, cmd_solve, cmd_wells, EXIT_OK, EXIT_PARTIAL, EXIT_PRECONDITION, EXIT_USAGE};
pub use config::{ConfigError, NonlinearitySpec, RunConfig};
