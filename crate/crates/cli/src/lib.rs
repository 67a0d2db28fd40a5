//! Command-line front end of the curvedflow laboratory: run configuration,
//! task orchestration, artifact persistence and the `curvedflow` subcommands.
//!
//! - [`config`]: the TOML [`RunConfig`](config::RunConfig) with fail-closed
//!   parsing and field-path diagnostics.
//! - [`tasks`]: one runner per task, producing verification records, CSV
//!   tables and JSON data.
//! - [`run`]: deterministic orchestration and the artifact manifest.
//! - [`cli`]: the clap command tree.

pub mod cli;
pub mod config;
pub mod run;
pub mod tasks;

pub use cli::main_with_args;
pub use config::{RunConfig, TaskKind};
pub use run::{run, RunSummary};
