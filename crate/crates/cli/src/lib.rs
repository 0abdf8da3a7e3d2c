//! File formats, reports, and command implementations for the `tscm` binary.

pub mod artifacts;
pub mod commands;
pub mod report;
pub mod snapshot;

/// A problem with how the command was invoked (bad flags, malformed config),
/// as opposed to a failure while carrying it out. The binary maps this to
/// exit code 1 and everything else to 2.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(UsageError(msg.into()))
}
