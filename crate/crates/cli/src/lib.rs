//! Command implementations behind the `dmve` binary.

pub mod commands;
pub mod plot;
pub mod sweep;

use std::fmt;

/// A problem with the user's input: bad arguments, unreadable or invalid
/// config, empty data. Maps to exit code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// Exit code for a failed command: 2 for usage and config errors, 1 otherwise.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    if err.downcast_ref::<UsageError>().is_some() {
        return 2;
    }
    match err.downcast_ref::<dmve::Error>() {
        Some(dmve::Error::Config { .. }) => 2,
        _ => 1,
    }
}
