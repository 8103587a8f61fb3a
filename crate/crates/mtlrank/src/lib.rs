//! File formats, configuration, reports and orchestration around
//! `mtlrank-core`: LETOR loading with a binary cache, checkpoints,
//! training runs, preference-ray sweeps, Pareto reports and the toy
//! problem. The `mtlrank` binary is a thin command line over this crate.

pub mod checkpoint;
pub mod config;
pub mod dataset;
pub mod report;
pub mod run;
pub mod toy;

pub use config::RunConfig;
pub use report::{FrontReport, RunReport};
