//! Model files and subcommands behind the `kibam` binary.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod model;

pub use commands::CliError;
pub use model::{Model, ModelError, ModelFile, Overrides};
