//! Monte-Carlo harness: scenario files, repeated randomized runs, divergence
//! filtering, RMSE aggregation and CDF tables.

mod campaign;
mod output;
mod scenario;

pub use campaign::{
    agent_ids, aggregate, evaluate_trace, run_campaign, run_campaign_with_progress, run_single,
    AggregateRow, CampaignResult, IterationError, RunMetrics,
};
pub use output::{
    error_cdf, read_runs_csv, write_aggregate_csv, write_campaign, write_cdf_csv, write_runs_csv,
    write_summary_json, CdfSeries, ErrorKind, FinalRmse, Summary, AGGREGATE_CSV, RUNS_CSV,
    SUMMARY_JSON,
};
pub use scenario::{
    default_scenario, ApertureSpec, ScenarioConfig, DEFAULT_BANDWIDTH_HZ, DEFAULT_CARRIER_HZ,
    DEFAULT_DIVERGENCE_THRESHOLD_M,
};
