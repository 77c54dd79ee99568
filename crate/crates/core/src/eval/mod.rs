//! ROC/AUC, normal quantiles, significance numbers and the multi-run harness.

mod auc;
mod harness;
mod normal;
mod significance;

pub use auc::{orientation_free_auc, roc_auc, AucResult, RocPoint};
pub use harness::{
    required_successes, run_experiment, run_ftl_once, run_udl_once, write_trace_csv, DataSource,
    ExperimentConfig, ExperimentOutput, Method, MethodSummary, RunAuc, SigEntry,
    SignificanceReport, TraceRow, DEFAULT_P_VALUES, DEFAULT_RUNS,
};
pub use normal::{normal_cdf, normal_inverse_cdf};
pub use significance::{mean, sample_std, significance};
