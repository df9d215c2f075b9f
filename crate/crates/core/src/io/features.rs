use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::tensor::read_tensor;
use crate::domain::CellType;
use crate::error::{Error, Result};
use crate::select::{TileFeature, TypeScores};

pub const FEATURES_SCHEMA: &str = "tile-features/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    pub tile_id: String,
    pub slide_id: String,
    pub cohort_id: String,
    pub x: f64,
    pub y: f64,
    /// Presence probability per cell type, when a scorer has been applied.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub scores: BTreeMap<CellType, f64>,
}

/// Row metadata of a feature tensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMeta {
    pub schema: String,
    pub tiles: Vec<FeatureRow>,
}

fn schema(path: &Path, message: impl Into<String>) -> Error {
    Error::Schema {
        path: path.into(),
        message: message.into(),
    }
}

pub fn read_feature_meta(path: &Path) -> Result<FeatureMeta> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let meta: FeatureMeta = serde_json::from_str(&text).map_err(|e| schema(path, e.to_string()))?;
    if meta.schema != FEATURES_SCHEMA {
        return Err(schema(
            path,
            format!("schema {:?}, expected {FEATURES_SCHEMA:?}", meta.schema),
        ));
    }
    Ok(meta)
}

/// Feature pool from an `[n, d]` f32 tensor and its row metadata.
pub fn read_feature_pool(
    features: &Path,
    meta_path: &Path,
) -> Result<(Vec<TileFeature>, Vec<TypeScores>)> {
    let rows = read_tensor(features)?
        .to_rows_f64()
        .map_err(|e| schema(features, e.to_string()))?;
    let meta = read_feature_meta(meta_path)?;
    if rows.len() != meta.tiles.len() {
        return Err(schema(
            meta_path,
            format!(
                "{} metadata rows for {} feature rows",
                meta.tiles.len(),
                rows.len()
            ),
        ));
    }
    let mut pool = Vec::with_capacity(rows.len());
    let mut scores = Vec::with_capacity(rows.len());
    for (vector, m) in rows.into_iter().zip(meta.tiles) {
        scores.push(m.scores);
        pool.push(TileFeature {
            tile_id: m.tile_id,
            slide_id: m.slide_id,
            cohort_id: m.cohort_id,
            vector,
            coords: (m.x, m.y),
        });
    }
    Ok((pool, scores))
}

/// Per-tile ensemble member probabilities from an `[n, members]` tensor.
pub fn read_member_probs(path: &Path, n: usize) -> Result<Vec<Vec<f64>>> {
    let rows = read_tensor(path)?
        .to_rows_f64()
        .map_err(|e| schema(path, e.to_string()))?;
    if rows.len() != n {
        return Err(schema(
            path,
            format!("{} probability rows for {n} tiles", rows.len()),
        ));
    }
    Ok(rows)
}
