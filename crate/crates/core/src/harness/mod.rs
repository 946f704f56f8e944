//! Monte-Carlo estimators, distribution tests and end-to-end experiments.

pub mod experiments;
pub mod report;
pub mod stats;

pub use report::{ExperimentReport, RawTable, Verdict};
pub use stats::{ks_two_sample, mc_estimate, MonteCarloSummary};
