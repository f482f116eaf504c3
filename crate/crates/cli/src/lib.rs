//! Batch front end: experiment configs in, `report.json` and CSV tables out.

pub mod config;
pub mod report;
pub mod run;

pub use config::{ConfigError, ExperimentConfig, Task};
pub use report::RunReport;
pub use run::{execute, execute_with, run, run_convergence, RunOptions};
