//! Driver for the train -> prune -> netlist -> simulate -> PPA flow.

pub mod config;
pub mod manifest;
pub mod pipeline;
pub mod report;

pub use config::ProjectConfig;
pub use manifest::RunManifest;
pub use pipeline::{run_pipeline, Step};
