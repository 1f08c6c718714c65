//! Experiment harness for the group-sparse support-shrinking solver: plans, sweeps,
//! result files and the prox verification suites.

pub mod error;
pub mod experiment;
pub mod presets;
pub mod results;
pub mod verify;

pub use error::{BenchError, Result};
pub use experiment::{relative_error, run_experiment, ExperimentPlan};
pub use results::{emit_results, parse_results, Format, ResultRow};
