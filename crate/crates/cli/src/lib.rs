//! Orchestration for disorder-averaged relaxation runs: configuration,
//! the run pipeline and the `compare` / `fit` / `positions` verbs.

pub mod commands;
pub mod config;
pub mod pipeline;

use std::fmt;

pub use config::RunConfig;
pub use pipeline::{run, RunOutcome};

/// Failure classes, each mapped to a process exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad command line or malformed input file contents.
    Usage(String),
    Config(String),
    /// Simulation failures: saturation, dimension limits, integrator or
    /// propagator breakdown.
    Runtime(spinrelax_core::Error),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => 1,
            CliError::Runtime(_) => 2,
            CliError::Io(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage: {m}"),
            CliError::Config(m) => write!(f, "config: {m}"),
            CliError::Runtime(e) => write!(f, "{e}"),
            CliError::Io(m) => write!(f, "io: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<spinrelax_core::Error> for CliError {
    fn from(e: spinrelax_core::Error) -> Self {
        use spinrelax_core::Error as E;
        match e {
            E::Io(e) => CliError::Io(e.to_string()),
            E::Parse(m) => CliError::Usage(m),
            e => CliError::Runtime(e),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
