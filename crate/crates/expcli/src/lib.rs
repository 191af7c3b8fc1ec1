//! Experiment orchestration for `sdl-core`: declarative configs, the
//! forward/reverse and schedule-sweep pipelines, serial-reproduction runs and
//! their CSV, PGM and manifest outputs.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod experiment;
pub mod manifest;
pub mod reference;
pub mod render;

pub use config::{ConfigError, ExperimentConfig, FamilySpec, SerialConfig};
pub use error::{RunError, RunResult};
pub use experiment::{
    evaluate, monte_carlo_reverse, run_forward_reverse, run_schedule_sweep, run_serial_demo, Evaluation, SweepRow,
};
pub use manifest::RunManifest;
pub use render::render_heatmap;
