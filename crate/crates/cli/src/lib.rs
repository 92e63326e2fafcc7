//! Experiment orchestration: configuration, multi-seed runs, result files
//! and comparison tables.

pub mod config;
pub mod report;
pub mod run;

pub use config::{load, resolve, EvalCadence, ModelSpec, Overrides, RunConfig};
pub use report::{collect, emit_csv, emit_markdown, Aggregate, Stat};
pub use run::{run_ablation, run_experiment, stream_dump, write_outputs, ExperimentReport, SeedMetrics, SeedReport};
