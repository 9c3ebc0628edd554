//! Saliency metrics and dataset-level reports.

mod metrics;
mod report;

pub use metrics::{auc, f_beta, f_measures, mae, FMeasures, BETA_SQ, THRESHOLDS};
pub use report::*;
