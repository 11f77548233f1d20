//! Configuration, orchestration and persistence for the `wgbec` tool.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod error;
pub mod output;
pub mod plot;

pub use commands::{execute, run, Command, Outcome};
pub use config::RunConfig;
pub use error::{CliError, CliResult};
