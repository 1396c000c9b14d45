//! Trajectory-following benchmark: metrics and the configuration comparison.

pub mod comparison;
pub mod metrics;

#[cfg(feature = "parallel")]
pub use comparison::run_comparison_parallel;
pub use comparison::{
    run_comparison, run_comparison_sequential, BenchConfig, Comparison, ComparisonReport, Configuration,
    ConfigurationResult, RmseReduction, RunResult,
};
pub use metrics::{best_lag, compute_metrics, compute_metrics_with, Metrics, MetricsError};
