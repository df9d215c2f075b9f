//! Domain types and elementary geometry shared by every other module.

mod annotation;
mod cell_type;
mod grid;
mod instance;
mod mask;
mod model_output;

pub use annotation::{validate_polygon, AnnotatedNucleus, AnnotationSet};
pub use cell_type::CellType;
pub use grid::Grid;
pub use instance::{canonicalize, InstanceMap, InstanceRecord, InstanceStats, TypedInstanceMap};
pub use mask::{centroid, rasterize, Mask};
pub use model_output::ModelOutput;
