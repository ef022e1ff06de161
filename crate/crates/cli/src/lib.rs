//! Batch front end for the conditional-wave-function transport experiments.
//!
//! A run reads a TOML config, executes one preset and writes one CSV table
//! per observable plus a `manifest.json` into the output directory.

pub mod config;
pub mod output;
pub mod runner;

pub use config::{parse_config, parse_config_with, ConfigError, Overrides, Preset, ResolvedConfig, RunConfig};
pub use output::{csv_body, Manifest, SCHEMA_VERSION};
pub use runner::{resolve_out_dir, run, RunError, RunOutcome, OUT_DIR_ENV};
