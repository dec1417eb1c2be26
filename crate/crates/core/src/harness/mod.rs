//! Experiment orchestration: run records, comparisons, plot data, and the
//! certification suites.

mod compare;
mod plot;
mod record;
pub mod verify;

pub use compare::{compare, Comparison, GroupStats, MeanSe};
pub use plot::{emit_plot_data, find_runs, PLOT_DIR};
pub use record::{
    load_config, run_experiment, steps_to_reach, trailing_means, RunOptions, RunRecord, RunSummary,
    CONFIG_FILE, FINAL_WINDOW, METRICS_FILE, POLICY_FILE, SUMMARY_FILE, VALUE_FILE,
};
pub use verify::{verify, CheckReport, Suite, SuiteReport};
