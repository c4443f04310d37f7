//! Experiment harness behind the `smb-bench` binary: run configuration with
//! config-file/flag merging, the run/sweep/verify/gradcheck commands, and
//! RFC-4180 CSV output.

pub mod commands;
pub mod config;
pub mod csvio;

pub use commands::{cmd_gradcheck, cmd_run, cmd_sweep, cmd_verify, SweepCell, SweepOutcome};
pub use config::{BuiltProblem, CliError, PartialConfig, ProblemKind, RunConfig};

/// Process exit codes: 0 success, 1 divergence, 2 config error,
/// 3 verification failure.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitStatus {
    Success,
    Divergence,
    ConfigError,
    VerificationFailure,
}

impl ExitStatus {
    pub fn code(self) -> u8 {
        match self {
            ExitStatus::Success => 0,
            ExitStatus::Divergence => 1,
            ExitStatus::ConfigError => 2,
            ExitStatus::VerificationFailure => 3,
        }
    }
}
