//! Experiment orchestration: metrics, train/evaluate phases, Monte Carlo
//! aggregation and CSV export.

mod experiment;
mod metrics;
mod output;

pub use experiment::{
    aggregate, evaluate_policy, mean_stderr, monte_carlo, run_single, run_streams, AggregateRow, EvalContext,
    ExperimentConfig, ExperimentResult, RunResult,
};
pub use metrics::{blocked_series, rbe, time_average_cost, Algo, MetricsRecorder, MetricsRow, Phase, VisitCounts};
pub use output::{metrics_csv_body, write_aggregate_csv, write_metrics_csv, AGGREGATE_COLUMNS, METRICS_COLUMNS};
