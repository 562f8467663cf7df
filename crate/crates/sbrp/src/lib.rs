//! File formats, configuration, MILP text output and the parallel sweep
//! driver around `sbrp-core`.

pub mod config;
mod error;
pub mod files;
pub mod lp;
pub mod sweep;

pub use error::{Error, Result};
