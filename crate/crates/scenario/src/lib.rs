//! Scenario files for the clone engine: a strict JSON schema, a
//! deterministic runner and machine-readable reports.

pub mod bundled;
pub mod check;
pub mod error;
pub mod input;
pub mod report;
pub mod run;
pub mod schema;

pub use error::ScenarioError;
pub use report::{AssertionResult, RunFailure, RunReport};
pub use run::{run_scenario, run_with_observer, Names};
pub use schema::{load_scenario, ScenarioScript, SCHEMA_VERSION};
