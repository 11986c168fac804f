//! Files, experiments and the command line around `rfcpca-core`.
//!
//! Datasets are directories of per-trial CSV files; models, manifests and
//! evaluations are JSON documents that each carry a [`provenance::Provenance`]
//! record binding them to their settings and data.

pub mod commands;
pub mod config;
pub mod error;
pub mod io;
pub mod provenance;
pub mod reproduce;

pub use error::{CliError, CliResult};
pub use rfcpca_core as core;
