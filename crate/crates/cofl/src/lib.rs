//! Scenario files, experiment orchestration, persistence and the `cofl` CLI
//! on top of [`cofl_core`].

// `!(x > 0.0)` style checks deliberately reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod harness;
pub mod output;
pub mod selftest;

pub use config::{Format, ScenarioConfig};
pub use error::HarnessError;
pub use harness::{compare_schemes, expand_grid, run_scenario, ScenarioReport};
