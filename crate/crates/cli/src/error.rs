//! Process-level error taxonomy: validation failures (bad flags, bad
//! config values, malformed or inconsistent inputs) exit with code 1,
//! runtime failures (IO during execution, algorithm errors) with code 2.

use std::fmt::Display;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

/// `map_err` adapter tagging an error as a validation failure.
pub fn vfail<E: Display>(ctx: &str) -> impl FnOnce(E) -> CliError + '_ {
    move |e| CliError::Validation(format!("{ctx}: {e}"))
}

/// `map_err` adapter tagging an error as a runtime failure.
pub fn rfail<E: Display>(ctx: &str) -> impl FnOnce(E) -> CliError + '_ {
    move |e| CliError::Runtime(format!("{ctx}: {e}"))
}

/// Shorthand for a validation failure built from a message.
pub fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Validation(msg.into())
}

pub type CliResult<T> = Result<T, CliError>;
