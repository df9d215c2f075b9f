//! File formats: tensors, annotations, typed instance maps, feature pools,
//! the contour-provider exchange and evaluation reports.

mod annotations;
mod exchange;
mod features;
mod instances;
mod report;
mod tensor;

pub use annotations::{
    annotations_to_string, parse_annotations, read_annotations, write_annotations,
    ParsedAnnotations, ANNOTATION_SCHEMA,
};
pub use exchange::{
    read_request, read_response, response_path, write_request, PointsRequest, TileRequest,
    REQUEST_SCHEMA,
};
pub use features::{
    read_feature_meta, read_feature_pool, read_member_probs, FeatureMeta, FeatureRow,
    FEATURES_SCHEMA,
};
pub use instances::{
    list_tiles, read_typed_tile, sidecar_for, sidecar_path, sidecar_to_string, tile_paths,
    write_sidecar, write_typed_tile, InstanceEntry, InstanceExtras, TileSidecar, TypedTile,
    INSTANCES_SCHEMA,
};
pub use report::{
    read_report, report_to_csv, report_to_json, write_report, EvalReport, ReportFormat, TileRow,
    MULTILABEL_NOTE, REPORT_SCHEMA,
};
pub use tensor::{read_tensor, write_tensor, Tensor, TensorData, MAGIC, VERSION};
