//! Scenario runner for the thermovar solvers: configuration files, single
//! runs, parameter studies and the headless oracle suite.

pub mod config;
pub mod error;
pub mod run;
pub mod study;
pub mod verify;

pub use config::{load_scenario, parse_scenario, Model, Scenario};
pub use error::{CliError, Result};
