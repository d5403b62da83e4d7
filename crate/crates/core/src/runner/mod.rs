//! Command-level orchestration: run configs, task files, combination
//! codes, manifests, result grids and learning-curve reports.

pub mod cli;
mod code;
mod config;
mod curves;
mod grid;
mod manifest;
mod tasks;

pub use code::CombinationCode;
pub use config::{parse_aux, parse_flat, DataConfig, RunConfig, SyntheticConfig};
pub use curves::{collect_curves, curves_report, dev_series, write_curves, write_drops, CodeCurve, WINDOW};
pub use grid::{code_rows, hierarchy_rows, run_grid, GridLine, GridRow, GridSpec, GridTable};
pub use manifest::{execute, execute_on, sha256_file, InputDigest, RunManifest, Source, TOOL};
pub use tasks::{input_files, load_suite, load_tasks, parse_tasks, TaskEntry};
