//! Scenario files, CSV reporting, and process-level plumbing around the
//! `nmpsim-core` engine.

pub mod report;
pub mod scenario_file;

pub use report::{write_compare_report, write_run_report};
pub use scenario_file::{load_scenario, scenario_from_str, validate_file, ScenarioFileError};
