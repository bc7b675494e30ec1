//! Library half of the `feenberg` command: problem files, output
//! formatting and the subcommands themselves.

pub mod commands;
pub mod format;
pub mod problem_file;

pub use commands::{run, Cli, Status};
pub use problem_file::ProblemFile;
