//! Subject-level cross-validation, metrics and multi-trial aggregation.

mod metrics;
mod output;
mod plan;
mod protocol;

pub use metrics::{compute_metrics, confusion, Counts, MeanStd, Metrics};
pub use output::{bag_size_sweep, reports_csv, sweep_csv, SweepRow, DEFAULT_SWEEP_SIZES};
pub use plan::{
    plan_loso, plan_rkf, Fold, FoldPlan, Scheme, DEFAULT_K, DEFAULT_LOSO_TRIALS, DEFAULT_REPEATS, DEFAULT_RKF_TRIALS,
};
pub use protocol::{
    run_protocol, with_workers, worker_threads, AttentionLearner, Learner, MetricsReport, ProtocolOutcome, Scored,
    SimpleLearner, SubjectPrediction, TrialOutcome,
};
