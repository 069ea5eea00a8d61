//! Experiment harness: declarative configs, seeded parallel execution of the
//! experiment catalog, and CSV/JSON emission.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod error;
pub mod experiments;
pub mod output;

pub use config::Config;
pub use error::{HarnessError, Result};
pub use experiments::{run_experiment, ExperimentId, ExperimentOutput, RunContext};
