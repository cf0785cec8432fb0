//! File formats, rendering, run manifests and the command line around
//! `scanshare-core`.

pub mod checkpoint;
pub mod cli;
pub mod dataset;
pub mod error;
pub mod manifest;
pub mod render;
pub mod table2;

pub use error::{CliError, Result};
pub use scanshare_core as core;
