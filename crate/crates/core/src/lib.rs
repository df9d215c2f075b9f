//! Non-neural computational core for H&E nuclei analysis.
//!
//! The crate turns segmentation-network output maps into typed nucleus
//! instances, scores predictions against ground truth with panoptic and
//! per-class metrics (with bootstrap confidence intervals), merges several
//! raters' point annotations into consensus ground truth, and selects tiles
//! for annotation with diversity, rare-type enrichment and ensemble
//! uncertainty arms.
//!
//! Neural components (the segmentation network, the point-to-contour model,
//! the feature extractor) stay outside; they exchange data with this crate
//! through the file formats in [`io`].

pub mod cli;
pub mod consensus;
pub mod domain;
pub mod error;
pub mod io;
pub mod matching;
pub mod metrics;
pub mod postprocess;
pub mod rng;
pub mod select;

pub use domain::{
    canonicalize, centroid, rasterize, AnnotatedNucleus, AnnotationSet, CellType, Grid,
    InstanceMap, InstanceRecord, Mask, ModelOutput, TypedInstanceMap,
};
pub use error::{Error, Result};

/// Version string embedded in every report.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Default seed for every seeded procedure.
pub const DEFAULT_SEED: u64 = 111;
