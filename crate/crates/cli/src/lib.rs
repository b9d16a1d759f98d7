//! Command-line surface for diffmel: file formats on disk, run manifests,
//! the sampling benchmark and the acceptance-criteria runner.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod args;
pub mod bench;
pub mod commands;
pub mod error;
pub mod manifest;
pub mod toy;
pub mod verify;

pub use error::{CliError, CliResult};
