//! Scenario files, CSV artifacts and the command workflows behind the
//! `bulkq` binary.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod output;
pub mod parallel;

pub use commands::{run, Check, Command, Outcome, RunError, RunOptions, Status};
pub use config::{parse_config, ConfigError, Scenario};

/// Environment variable naming the default output directory.
pub const OUT_ENV: &str = "BULKQ_OUT";

/// Output directory: the flag, then the scenario's `out`, then `$BULKQ_OUT`,
/// then `bulkq-out`.
pub fn resolve_out_dir(flag: Option<std::path::PathBuf>, scenario: &Scenario) -> std::path::PathBuf {
    flag.or_else(|| scenario.out.clone())
        .or_else(|| std::env::var_os(OUT_ENV).map(Into::into))
        .unwrap_or_else(|| "bulkq-out".into())
}
