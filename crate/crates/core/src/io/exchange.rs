use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::tensor::read_tensor;
use crate::consensus::ResponseProvider;
use crate::error::{Error, Result};

pub const REQUEST_SCHEMA: &str = "points-request/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TileRequest {
    pub tile_id: String,
    pub width: usize,
    pub height: usize,
    /// `(x, y)`; the response holds one mask plane per point, in this order.
    pub points: Vec<(f64, f64)>,
}

/// Points an external contour model is asked to segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointsRequest {
    pub schema: String,
    /// `"points"` for rater annotations, `"centroids"` for consensus centroids.
    pub stage: String,
    pub tiles: Vec<TileRequest>,
}

impl PointsRequest {
    pub fn new(stage: &str, tiles: Vec<TileRequest>) -> Self {
        PointsRequest {
            schema: REQUEST_SCHEMA.into(),
            stage: stage.into(),
            tiles,
        }
    }
}

pub fn write_request(req: &PointsRequest, path: &Path) -> Result<()> {
    let mut s = serde_json::to_string_pretty(req)?;
    s.push('\n');
    fs::write(path, s).map_err(|e| Error::io(path, e))
}

pub fn read_request(path: &Path) -> Result<PointsRequest> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let req: PointsRequest = serde_json::from_str(&text).map_err(|e| Error::Schema {
        path: path.into(),
        message: e.to_string(),
    })?;
    if req.schema != REQUEST_SCHEMA {
        return Err(Error::Schema {
            path: path.into(),
            message: format!("schema {:?}, expected {REQUEST_SCHEMA:?}", req.schema),
        });
    }
    Ok(req)
}

/// Response tensor of one tile: `<dir>/<tile_id>.<stage>.nuct`.
pub fn response_path(dir: &Path, tile_id: &str, stage: &str) -> std::path::PathBuf {
    dir.join(format!("{tile_id}.{stage}.nuct"))
}

/// Loads the masks answering `req` from `dir`: per tile a `[k, h, w]` stack
/// whose plane `i` is the mask of point `i`.
pub fn read_response(dir: &Path, req: &PointsRequest) -> Result<ResponseProvider> {
    let mut provider = ResponseProvider::new();
    for t in &req.tiles {
        let path = response_path(dir, &t.tile_id, &req.stage);
        let bad = |message: String| Error::Schema {
            path: path.clone(),
            message,
        };
        let tensor = read_tensor(&path)?;
        let want = [t.points.len() as u32, t.height as u32, t.width as u32];
        if tensor.dims() != want {
            return Err(bad(format!(
                "masks are {:?}, expected {want:?} ({} points on a {}x{} tile)",
                tensor.dims(),
                t.points.len(),
                t.height,
                t.width
            )));
        }
        let masks = tensor.to_masks().map_err(|e| bad(e.to_string()))?;
        provider
            .insert(t.tile_id.clone(), t.points.clone(), masks)
            .map_err(|e| bad(e.to_string()))?;
    }
    Ok(provider)
}
