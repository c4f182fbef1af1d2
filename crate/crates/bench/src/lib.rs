//! Benchmark runners, report types and file output for `grkan-core`.

pub mod config;
pub mod denoise;
mod error;
pub mod io;
pub mod report;
pub mod table1;

pub use error::{BenchError, Result};
