//! Batch driver for `coldscat-core`: TOML run configurations, parallel
//! (E, B, M) sweeps with an S-matrix cache, and CSV/JSON reports.

pub mod cache;
pub mod config;
pub mod report;
pub mod sweep;

pub use config::RunConfig;
pub use sweep::{run, Options, SweepKind};
