//! Detection, segmentation and classification metrics with bootstrap
//! statistics.

mod bootstrap;
mod classification;
mod evaluate;
mod panoptic;

pub use bootstrap::{
    bootstrap_ci, bootstrap_many, bootstrap_replicates, paired_pvalue, paired_pvalues, percentile,
    resample_indices, BootstrapConfig, Interval,
};
pub use classification::{
    classification_counts, f1_from_counts, multilabel_counts, ClassCounts, TypeCounts,
};
pub use evaluate::{
    aggregate, attach_pvalues, evaluate_dataset, evaluate_tile, Aggregate, Estimate, EvalConfig,
    MetricsReport, TileEval, TileInput,
};
pub use panoptic::{panoptic_quality, PanopticQuality, PqCounts};
