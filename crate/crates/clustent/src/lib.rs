//! File formats, artifacts and the `clustent` command-line driver on top of
//! `clustent-core`.

pub mod artifacts;
pub mod cli;
pub mod error;
pub mod io;
pub mod parallel;

pub use error::{CliError, Result};
