use std::collections::BTreeMap;

use crate::domain::Mask;
use crate::error::{Error, Result};

/// Expands an annotated point into a nucleus mask.
pub trait ContourProvider: Sync {
    fn expand(&self, tile_id: &str, point: (f64, f64), height: usize, width: usize)
        -> Result<Mask>;
}

/// Disk of fixed radius around the pixel containing the point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiskProvider {
    pub radius: f64,
}

impl DiskProvider {
    pub fn new(radius: f64) -> Result<Self> {
        if !(radius.is_finite() && radius >= 0.0) {
            return Err(Error::invalid(format!(
                "disk radius {radius} must be finite and non-negative"
            )));
        }
        Ok(DiskProvider { radius })
    }
}

impl ContourProvider for DiskProvider {
    fn expand(
        &self,
        _tile_id: &str,
        (x, y): (f64, f64),
        height: usize,
        width: usize,
    ) -> Result<Mask> {
        if !(x >= 0.0 && y >= 0.0 && x < width as f64 && y < height as f64) {
            return Err(Error::invalid(format!(
                "point ({x}, {y}) outside {width}x{height} tile"
            )));
        }
        let (r0, c0) = (y.floor() as i64, x.floor() as i64);
        let reach = self.radius.floor() as i64;
        let r2 = self.radius * self.radius;
        let mut px = Vec::new();
        for r in (r0 - reach).max(0)..=(r0 + reach).min(height as i64 - 1) {
            for c in (c0 - reach).max(0)..=(c0 + reach).min(width as i64 - 1) {
                let (dr, dc) = ((r - r0) as f64, (c - c0) as f64);
                if dr * dr + dc * dc <= r2 {
                    px.push((r as usize * width + c as usize) as u32);
                }
            }
        }
        Mask::from_indices(height, width, px)
    }
}

type PointMasks = Vec<((f64, f64), Mask)>;

/// Masks returned by an external model for a list of requested points.
///
/// Masks are kept per point, so the masks of nearby points may overlap.
#[derive(Debug, Clone, Default)]
pub struct ResponseProvider {
    tiles: BTreeMap<String, PointMasks>,
}

impl ResponseProvider {
    pub fn new() -> Self {
        Self::default()
    }

    /// `masks[k]` answers `points[k]`.
    pub fn insert(
        &mut self,
        tile_id: impl Into<String>,
        points: Vec<(f64, f64)>,
        masks: Vec<Mask>,
    ) -> Result<()> {
        if points.len() != masks.len() {
            return Err(Error::shape(format!(
                "{} masks for {} points",
                masks.len(),
                points.len()
            )));
        }
        self.tiles
            .insert(tile_id.into(), points.into_iter().zip(masks).collect());
        Ok(())
    }
}

impl ContourProvider for ResponseProvider {
    fn expand(
        &self,
        tile_id: &str,
        (x, y): (f64, f64),
        height: usize,
        width: usize,
    ) -> Result<Mask> {
        let entries = self
            .tiles
            .get(tile_id)
            .ok_or_else(|| Error::invalid(format!("no masks for tile {tile_id}")))?;
        let k = entries
            .iter()
            .position(|&((px, py), _)| (px - x).abs() < 1e-9 && (py - y).abs() < 1e-9)
            .ok_or_else(|| {
                Error::invalid(format!("point ({x}, {y}) was not requested for {tile_id}"))
            })?;
        let mask = &entries[k].1;
        if (mask.height(), mask.width()) != (height, width) {
            return Err(Error::shape(format!(
                "mask response for {tile_id} is {}x{}, tile is {height}x{width}",
                mask.height(),
                mask.width()
            )));
        }
        if mask.is_empty() {
            return Err(Error::invalid(format!(
                "empty mask for point {k} of {tile_id}"
            )));
        }
        Ok(mask.clone())
    }
}
