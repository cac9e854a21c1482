//! File formats, configuration and the command-line pipeline for
//! [`hydrosep_core`].
//!
//! Everything here is thin plumbing: parsing and writing the events CSV,
//! matrix CSV and model JSON formats, resolving run configuration, and the
//! `hydrosep` subcommands.

pub mod cli;
pub mod config;
pub mod error;
pub mod formats;
pub mod logging;
pub mod model_file;

pub use error::{Error, Result};
pub use hydrosep_core as core;
