//! Experiment driver: configuration, subcommands and report aggregation.

pub mod commands;
pub mod config;
pub mod report;

use gbi_core::Error as CoreError;

use config::ConfigError;

/// Machine-parsable error kind for the one-line failure message.
pub fn error_kind(err: &anyhow::Error) -> &'static str {
    for cause in err.chain() {
        if cause.is::<ConfigError>() {
            return "config";
        }
        if let Some(e) = cause.downcast_ref::<CoreError>() {
            return match e {
                CoreError::Io(_) => "io",
                CoreError::BadMagic { .. } | CoreError::Truncated { .. } | CoreError::CountMismatch { .. } => "data",
                CoreError::Checkpoint(_) => "checkpoint",
                CoreError::Diverged { .. } => "diverged",
                _ => "invalid",
            };
        }
        if cause.is::<std::io::Error>() {
            return "io";
        }
        if cause.is::<csv::Error>() {
            return "data";
        }
    }
    "error"
}

/// `error: kind=<kind> msg="<escaped message chain>"`
pub fn error_line(err: &anyhow::Error) -> String {
    let msg = format!("{err:#}").replace('\\', "\\\\").replace('"', "\\\"").replace('\n', " ");
    format!("error: kind={} msg=\"{msg}\"", error_kind(err))
}
