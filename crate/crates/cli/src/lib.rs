//! Command-line pipeline around the scan-translation library: dataset
//! generation, training, domain adaptation, reconstruction, segmentation,
//! metric evaluation, odometry comparison, ablations, and reporting.
//!
//! Every subcommand is deterministic for a fixed `--seed` and writes only
//! beneath its `--out` location. Exit codes: 0 success, 1 validation or
//! usage error, 2 runtime failure.

#![deny(unsafe_code)]

pub mod commands;
pub mod config;
pub mod error;
pub mod io;
pub mod manifest;
pub mod plot;
