//! Seeded regret experiments: configuration, the episode loop, sweeps over
//! `(algorithm, m, seed)` and the CSV/JSON outputs.

mod config;
mod output;
mod runner;
mod stats;

pub use config::{Algorithm, DesignConfig, ExperimentConfig, InstanceSource, Seeds};
pub use output::{emit_results, read_curves, recompute_summary, write_curves, CurveRow, SummaryFile, CURVES_HEADER};
pub use runner::{
    cell_key, prepare, run_single, run_sweep, run_with_learner, summarize, CellFailure, FixedPolicy, Learner, Prepared,
    RegretRecord, SweepResult, UniformRandom,
};
pub use stats::{CellSummary, Z_975};
