//! Configuration, scenario execution and the verification drivers.

pub mod config;
pub mod mms;
pub mod oracle;
pub mod output;
pub mod run;
pub mod stabilize;
pub mod sweep;
pub mod weak;

pub use config::{ConfigError, ScenarioConfig};
pub use run::{run_prepared, run_scenario, HarnessError, RunOptions, RunOutput, RunStatus, RunSummary, Scenario};
