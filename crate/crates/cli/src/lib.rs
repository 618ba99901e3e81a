//! Config-driven front end for truncated K-L MAP experiments: reads an
//! experiment file, runs eigendecompositions, solves and bound sweeps, and
//! writes CSV (and optionally SVG) results.

pub mod commands;
pub mod config;
pub mod output;
pub mod svg;

pub use commands::{run, Command, Options, OUT_DIR_ENV};
pub use config::ExperimentConfig;
