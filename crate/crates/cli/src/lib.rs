//! Scenario runner and acceptance battery on top of `abplab`.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod output;
pub mod profiles;
pub mod runner;
pub mod scenario;
pub mod suite;

pub use error::{CliError, CliResult};
