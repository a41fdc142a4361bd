//! Orchestration behind the `lateq` binary: run configuration, pipeline
//! stages, baselines and reports.

pub mod config;
pub mod pipeline;

pub use config::RunConfig;
pub use pipeline::Run;
