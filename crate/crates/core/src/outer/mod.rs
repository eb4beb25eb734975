//! Outer hyperparameter loops producing per-iteration traces.

mod config;
mod hoag;
mod opa_quality;
mod random_search;
mod trace;

pub use config::{truncated_backward_config, MethodDescriptor, OuterConfig, StepRule};
pub use hoag::{hoag_run, solve_inner};
pub use opa_quality::{
    median, opa_quality_config, opa_quality_trial, OpaDirection, OpaQualityRow, MAX_DENSE_ORACLE_DIM,
};
pub use random_search::{random_search_run, random_search_run_with, RANDOM_SEARCH_TOL};
pub use trace::{RowStatus, RunTrace, TraceRow};
