//! Library side of the command-line driver: configuration, on-disk
//! formats, and the run orchestration shared by the subcommands.

pub mod config;
pub mod io;
pub mod run;

use thiserror::Error;

/// CLI failure classes, mapped onto process exit codes: configuration and
/// usage problems exit 2, runtime failures exit 3.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

/// Verbosity from the `BOMPC_LOG` environment variable:
/// `quiet`/`off` < `error` < `info` (default) < `debug`.
pub fn log_level() -> u8 {
    match std::env::var("BOMPC_LOG").as_deref() {
        Ok("quiet") | Ok("off") => 0,
        Ok("error") => 1,
        Ok("debug") => 3,
        _ => 2,
    }
}

pub fn log_info(msg: &str) {
    if log_level() >= 2 {
        eprintln!("bompc: {msg}");
    }
}

pub fn log_debug(msg: &str) {
    if log_level() >= 3 {
        eprintln!("bompc[debug]: {msg}");
    }
}
