//! Process exit discipline.
//!
//! Every failure leaves one machine-readable JSON line on stderr and a
//! distinct exit code: 2 for input problems, 3 for convergence failures
//! under `--strict`, 4 for cohorts that never reach the minimum size.

use balancepoint_core::Error;

pub const EXIT_INPUT: i32 = 2;
pub const EXIT_CONVERGENCE: i32 = 3;
pub const EXIT_COHORT: i32 = 4;

#[derive(Debug)]
pub struct CliError {
    pub exit: i32,
    pub kind: &'static str,
    pub message: String,
}

pub type Result<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn input(message: impl Into<String>) -> CliError {
        CliError { exit: EXIT_INPUT, kind: "input_error", message: message.into() }
    }

    pub fn convergence(message: impl Into<String>) -> CliError {
        CliError { exit: EXIT_CONVERGENCE, kind: "convergence_failure", message: message.into() }
    }

    pub fn cohort(message: impl Into<String>) -> CliError {
        CliError { exit: EXIT_COHORT, kind: "insufficient_cohort", message: message.into() }
    }

    /// Prefix the message with where it happened.
    pub fn context(mut self, what: impl std::fmt::Display) -> CliError {
        self.message = format!("{what}: {}", self.message);
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::json!({ "kind": self.kind, "message": self.message }).to_string()
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> CliError {
        match e {
            Error::InsufficientCohort { .. } => CliError::cohort(e.to_string()),
            _ => CliError::input(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> CliError {
        CliError::input(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> CliError {
        CliError::input(e.to_string())
    }
}
