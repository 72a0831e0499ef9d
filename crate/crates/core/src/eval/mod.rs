//! Benchmark harness and the metrics computed from its output.

mod alignment;
mod harness;
mod metrics;

use thiserror::Error;

pub use alignment::{sb_alignment, AlignmentReport, AlignmentSample, PROB_FLOOR};
pub use harness::{
    collect_alignment, parallel_map, read_csv, run_benchmark, run_one, sweep_from_rows, sweep_improvement_pct,
    sweep_policy_name, transition_timing, write_csv, AlignmentProbe, HarnessOptions, PolicyFactory, PolicySpec,
    SweepRow, TimingRow,
};
pub use metrics::{geometric_mean, instance_ranks, summarize, MetricsReport, PolicySummary};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("empty state sample")]
    EmptySample,
    #[error(transparent)]
    Solve(#[from] crate::bnb::BnbError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[cfg(test)]
mod tests;
