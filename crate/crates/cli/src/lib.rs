//! Experiment runner: config files, the train/eval pipeline, run
//! directories and reports.

pub mod commands;
pub mod config;
pub mod pipeline;
pub mod svg;

pub use commands::UsageError;
pub use config::{ConfigError, ExperimentConfig};

/// Process exit code for an error: 2 for bad configs or invocations, 3 for
/// failures while running.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    if err.chain().any(|c| c.is::<ConfigError>() || c.is::<UsageError>()) {
        2
    } else {
        3
    }
}
