//! Scenario runner for the polariton verification suite: configuration,
//! stage pipeline, JSON and CSV reports, and refinement studies.

pub mod config;
pub mod error;
pub mod pipeline;
pub mod report;
pub mod runner;

pub use config::{ScenarioConfig, Stage, Tolerances};
pub use error::CliError;
pub use pipeline::Pipeline;
pub use report::{CheckResult, StageReport};
