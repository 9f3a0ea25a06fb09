//! Command-line front end: system files, the five subcommands and their reports.

pub mod battery;
pub mod commands;
pub mod error;
pub mod format;
pub mod report;

pub use commands::{cmd_check, cmd_connect, cmd_identities, cmd_monodromy, cmd_solve, At, Options};
pub use error::CliError;
pub use format::SystemFile;
pub use report::Report;
