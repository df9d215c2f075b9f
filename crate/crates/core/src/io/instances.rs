use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::tensor::{read_tensor, write_tensor, Tensor};
use crate::domain::{CellType, TypedInstanceMap};
use crate::error::{Error, Result};

pub const INSTANCES_SCHEMA: &str = "typed-instances/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceEntry {
    pub id: u32,
    pub labels: Vec<CellType>,
    /// `(x, y)` of the annotated point, when the instance comes from one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub point: Option<(f64, f64)>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub raters: Vec<String>,
}

/// Sidecar of an instance-map tensor: labels and tile metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TileSidecar {
    pub schema: String,
    pub tile_id: String,
    pub height: usize,
    pub width: usize,
    /// Free-form strings such as cohort or scanner, usable as strata.
    #[serde(default)]
    pub meta: BTreeMap<String, String>,
    pub instances: Vec<InstanceEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TypedTile {
    pub tile_id: String,
    pub meta: BTreeMap<String, String>,
    pub map: TypedInstanceMap,
}

pub fn sidecar_path(tensor_path: &Path) -> PathBuf {
    tensor_path.with_extension("json")
}

pub fn tile_paths(dir: &Path, tile_id: &str) -> (PathBuf, PathBuf) {
    let t = dir.join(format!("{tile_id}.nuct"));
    let s = sidecar_path(&t);
    (t, s)
}

/// Consensus point and supporting raters per instance id.
pub type InstanceExtras = BTreeMap<u32, (Option<(f64, f64)>, Vec<String>)>;

pub fn sidecar_for(tile: &TypedTile, extra: Option<&InstanceExtras>) -> TileSidecar {
    let (height, width) = tile.map.shape();
    TileSidecar {
        schema: INSTANCES_SCHEMA.into(),
        tile_id: tile.tile_id.clone(),
        height,
        width,
        meta: tile.meta.clone(),
        instances: tile
            .map
            .instances()
            .iter()
            .map(|r| {
                let (point, raters) = extra
                    .and_then(|e| e.get(&r.id).cloned())
                    .unwrap_or((None, Vec::new()));
                InstanceEntry {
                    id: r.id,
                    labels: r.labels.clone(),
                    point,
                    raters,
                }
            })
            .collect(),
    }
}

pub fn sidecar_to_string(s: &TileSidecar) -> Result<String> {
    let mut out = serde_json::to_string_pretty(s)?;
    out.push('\n');
    Ok(out)
}

pub fn write_sidecar(s: &TileSidecar, path: &Path) -> Result<()> {
    fs::write(path, sidecar_to_string(s)?).map_err(|e| Error::io(path, e))
}

/// Writes the label tensor at `tensor_path` and its sidecar next to it.
pub fn write_typed_tile(tile: &TypedTile, tensor_path: &Path) -> Result<()> {
    write_tensor(&Tensor::from_instance_map(tile.map.map()), tensor_path)?;
    write_sidecar(&sidecar_for(tile, None), &sidecar_path(tensor_path))
}

pub fn read_typed_tile(tensor_path: &Path) -> Result<TypedTile> {
    let map = read_tensor(tensor_path)?
        .to_instance_map()
        .map_err(|e| schema_err(tensor_path, e))?;
    let sp = sidecar_path(tensor_path);
    let text = fs::read_to_string(&sp).map_err(|e| Error::io(&sp, e))?;
    let side: TileSidecar = serde_json::from_str(&text).map_err(|e| schema_err(&sp, e.into()))?;
    if side.schema != INSTANCES_SCHEMA {
        return Err(schema_err(
            &sp,
            Error::invalid(format!(
                "schema {:?}, expected {INSTANCES_SCHEMA:?}",
                side.schema
            )),
        ));
    }
    if (side.height, side.width) != map.shape() {
        return Err(schema_err(
            &sp,
            Error::shape(format!(
                "sidecar says {}x{}, tensor is {:?}",
                side.height,
                side.width,
                map.shape()
            )),
        ));
    }
    let labels = side
        .instances
        .into_iter()
        .map(|e| (e.id, e.labels))
        .collect();
    let map = TypedInstanceMap::new(map, labels).map_err(|e| schema_err(&sp, e))?;
    Ok(TypedTile {
        tile_id: side.tile_id,
        meta: side.meta,
        map,
    })
}

fn schema_err(path: &Path, e: Error) -> Error {
    if e.is_io() {
        return e;
    }
    Error::Schema {
        path: path.into(),
        message: e.to_string(),
    }
}

/// Tile ids of the `*.nuct` files in `dir`, sorted.
pub fn list_tiles(dir: &Path) -> Result<Vec<String>> {
    let mut ids = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let p = entry.map_err(|e| Error::io(dir, e))?.path();
        if p.extension().is_some_and(|x| x == "nuct") {
            if let Some(stem) = p.file_stem().and_then(|s| s.to_str()) {
                ids.push(stem.to_string());
            }
        }
    }
    ids.sort();
    Ok(ids)
}
