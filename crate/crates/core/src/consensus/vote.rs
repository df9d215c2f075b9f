use std::collections::BTreeSet;

use super::cluster::{Cluster, ClusterSet};
use super::provider::ContourProvider;
use super::{ConsensusNucleus, ConsensusParams};
use crate::domain::CellType;
use crate::error::Result;

/// Modal labels of a cluster. Ties keep every tied label; Unknown wins only
/// when no typed label reaches the mode.
pub fn modal_labels(cluster: &Cluster) -> Vec<CellType> {
    let mut counts = [0usize; CellType::COUNT];
    for m in &cluster.members {
        let distinct: BTreeSet<CellType> = m.types.iter().copied().collect();
        for t in distinct {
            counts[t.code() as usize] += 1;
        }
    }
    let mode = counts.iter().copied().max().unwrap_or(0);
    if mode == 0 {
        return vec![CellType::Unknown];
    }
    let typed: Vec<CellType> = CellType::ALL
        .iter()
        .copied()
        .filter(|&t| t != CellType::Unknown && counts[t.code() as usize] == mode)
        .collect();
    if typed.is_empty() {
        vec![CellType::Unknown]
    } else {
        typed
    }
}

/// Mean of the member points.
pub fn cluster_centroid(cluster: &Cluster) -> (f64, f64) {
    let n = cluster.members.len() as f64;
    let (sx, sy) = cluster
        .members
        .iter()
        .fold((0.0, 0.0), |(sx, sy), m| (sx + m.x, sy + m.y));
    (sx / n, sy / n)
}

/// One nucleus per cluster supported by enough raters, sorted by `(y, x)`.
pub fn vote_consensus(
    clusters: &ClusterSet,
    params: &ConsensusParams,
    provider: &dyn ContourProvider,
) -> Result<Vec<ConsensusNucleus>> {
    params.validate()?;
    let mut out = Vec::new();
    for c in &clusters.clusters {
        let raters: BTreeSet<String> = c.raters().into_iter().map(str::to_string).collect();
        if raters.len() < params.min_raters {
            continue;
        }
        let centroid = cluster_centroid(c);
        let mask = provider.expand(&clusters.tile_id, centroid, clusters.height, clusters.width)?;
        out.push(ConsensusNucleus {
            centroid,
            labels: modal_labels(c),
            supporting_raters: raters,
            mask,
        });
    }
    out.sort_by(|a, b| {
        a.centroid
            .1
            .total_cmp(&b.centroid.1)
            .then(a.centroid.0.total_cmp(&b.centroid.0))
            .then(a.labels.cmp(&b.labels))
    });
    Ok(out)
}
