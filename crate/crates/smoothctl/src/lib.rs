//! Experiment harness around the `smoothrl` core: config parsing, seeded
//! training fan-out, deterministic evaluation, run comparison, environment
//! verification, and SVG plotting.

pub mod compare;
pub mod config;
pub mod evaluation;
pub mod plot;
pub mod runner;
pub mod verify;

/// An error in how the tool was invoked (bad arguments, inconsistent inputs)
/// as opposed to a runtime failure; the CLI maps it to exit code 2.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

impl UsageError {
    pub fn new(message: impl Into<String>) -> Self {
        UsageError(message.into())
    }
}
