//! Consensus ground truth from several raters' point annotations.

mod cluster;
mod provider;
mod vote;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

pub use cluster::{
    cluster_annotations, expand_contours, Cluster, ClusterMember, ClusterSet, ExpandedNucleus,
    ExpandedSet,
};
pub use provider::{ContourProvider, DiskProvider, ResponseProvider};
pub use vote::{cluster_centroid, modal_labels, vote_consensus};

use crate::domain::{AnnotationSet, CellType, Grid, InstanceMap, Mask, TypedInstanceMap};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConsensusParams {
    pub iou_threshold: f64,
    pub min_raters: usize,
    /// Radius of the built-in disk provider.
    pub stub_radius: f64,
}

impl Default for ConsensusParams {
    fn default() -> Self {
        ConsensusParams {
            iou_threshold: 0.4,
            min_raters: 2,
            stub_radius: 8.0,
        }
    }
}

impl ConsensusParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.iou_threshold > 0.0 && self.iou_threshold < 1.0) {
            return Err(Error::invalid(format!(
                "iou threshold {} not in (0, 1)",
                self.iou_threshold
            )));
        }
        if self.min_raters < 2 {
            return Err(Error::invalid(format!(
                "min_raters must be >= 2, got {}",
                self.min_raters
            )));
        }
        if !(self.stub_radius.is_finite() && self.stub_radius >= 0.0) {
            return Err(Error::invalid(format!(
                "stub radius {} invalid",
                self.stub_radius
            )));
        }
        Ok(())
    }

    pub fn disk_provider(&self) -> DiskProvider {
        DiskProvider {
            radius: self.stub_radius,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConsensusNucleus {
    /// `(x, y)` in pixels.
    pub centroid: (f64, f64),
    /// Sorted by code.
    pub labels: Vec<CellType>,
    pub supporting_raters: BTreeSet<String>,
    pub mask: Mask,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConsensusOutcome {
    pub tile_id: String,
    pub height: usize,
    pub width: usize,
    pub nuclei: Vec<ConsensusNucleus>,
    /// Per rater, nuclei that could not be expanded.
    pub expand_failures: BTreeMap<String, usize>,
}

/// Full pipeline for one tile: expand, cluster, vote.
pub fn build_consensus(
    sets: &[AnnotationSet],
    params: &ConsensusParams,
    expand_with: &dyn ContourProvider,
    centroid_with: &dyn ContourProvider,
) -> Result<ConsensusOutcome> {
    let expanded = sets
        .iter()
        .map(|s| expand_contours(s, expand_with))
        .collect::<Result<Vec<_>>>()?;
    let clusters = cluster_annotations(&expanded, params)?;
    let nuclei = vote_consensus(&clusters, params, centroid_with)?;
    Ok(ConsensusOutcome {
        tile_id: clusters.tile_id,
        height: clusters.height,
        width: clusters.width,
        nuclei,
        expand_failures: expanded
            .into_iter()
            .map(|e| (e.rater_id, e.failures))
            .collect(),
    })
}

/// Paints consensus nuclei in order; a pixel belongs to the first nucleus that
/// claims it. Returns the map and the instance id of every nucleus, `None`
/// for nuclei left without pixels.
pub fn consensus_instances(
    nuclei: &[ConsensusNucleus],
    height: usize,
    width: usize,
) -> Result<(TypedInstanceMap, Vec<Option<u32>>)> {
    let mut grid = Grid::filled(height, width, 0u32);
    let mut labels = BTreeMap::new();
    let mut ids = Vec::with_capacity(nuclei.len());
    let mut next = 1u32;
    for n in nuclei {
        if n.mask.height() != height || n.mask.width() != width {
            return Err(Error::shape("consensus mask does not match the tile"));
        }
        let mut painted = false;
        for &p in n.mask.indices() {
            let cell = &mut grid.as_mut_slice()[p as usize];
            if *cell == 0 {
                *cell = next;
                painted = true;
            }
        }
        if painted {
            labels.insert(next, n.labels.clone());
            ids.push(Some(next));
            next += 1;
        } else {
            ids.push(None);
        }
    }
    let map = TypedInstanceMap::new(InstanceMap::new(grid), labels)?;
    Ok((map, ids))
}
