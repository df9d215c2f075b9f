//! Instance correspondence between ground truth and prediction.

mod hungarian;
mod iou;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use hungarian::{hungarian, Assignment};
pub use iou::{pairwise_iou, IouTable};

use crate::domain::TypedInstanceMap;
use crate::error::{Error, Result};

/// Pairing rule used by [`match_instances`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchMode {
    /// Every pair with IoU above `iou_threshold`.
    Iou,
    /// Minimum total centroid distance, gated at `max_pair_dist`.
    Centroid,
}

impl fmt::Display for MatchMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MatchMode::Iou => "iou",
            MatchMode::Centroid => "centroid",
        })
    }
}

impl FromStr for MatchMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "iou" => Ok(MatchMode::Iou),
            "centroid" => Ok(MatchMode::Centroid),
            other => Err(Error::invalid(format!(
                "unknown match mode {other:?} (expected iou or centroid)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchParams {
    /// Pairs must exceed this IoU in `Iou` mode.
    pub iou_threshold: f64,
    /// Centroid gate in pixels (`Centroid` mode); 15 px is about 3.75 um at 40x.
    pub max_pair_dist: f64,
    /// In `Centroid` mode, pairs with IoU at or below this are dropped; 0 disables.
    pub iou_floor: f64,
}

impl Default for MatchParams {
    fn default() -> Self {
        MatchParams {
            iou_threshold: 0.5,
            max_pair_dist: 15.0,
            iou_floor: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchedPair {
    pub gt_id: u32,
    pub pred_id: u32,
    pub iou: f64,
    pub centroid_distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub mode: MatchMode,
    /// Sorted by `gt_id`.
    pub pairs: Vec<MatchedPair>,
    pub unmatched_gt: Vec<u32>,
    pub unmatched_pred: Vec<u32>,
}

impl MatchResult {
    pub fn tp(&self) -> usize {
        self.pairs.len()
    }

    pub fn fp(&self) -> usize {
        self.unmatched_pred.len()
    }

    pub fn fn_(&self) -> usize {
        self.unmatched_gt.len()
    }
}

fn distance(a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - b.0).hypot(a.1 - b.1)
}

/// One-to-one correspondence between the instances of `gt` and `pred`.
pub fn match_instances(
    gt: &TypedInstanceMap,
    pred: &TypedInstanceMap,
    mode: MatchMode,
    params: &MatchParams,
) -> Result<MatchResult> {
    let table = pairwise_iou(gt.map(), pred.map())?;
    let pairs: Vec<MatchedPair> = match mode {
        MatchMode::Iou => table
            .iter()
            .filter(|&(_, iou)| iou > params.iou_threshold)
            .map(|((g, p), iou)| MatchedPair {
                gt_id: g,
                pred_id: p,
                iou,
                centroid_distance: distance(
                    gt.record(g).expect("id from map").centroid,
                    pred.record(p).expect("id from map").centroid,
                ),
            })
            .collect(),
        MatchMode::Centroid => centroid_pairs(gt, pred, &table, params)?,
    };
    let used_g: BTreeSet<u32> = pairs.iter().map(|p| p.gt_id).collect();
    let used_p: BTreeSet<u32> = pairs.iter().map(|p| p.pred_id).collect();
    debug_assert_eq!(used_g.len(), pairs.len());
    debug_assert_eq!(used_p.len(), pairs.len());
    Ok(MatchResult {
        mode,
        unmatched_gt: gt
            .instances()
            .iter()
            .map(|r| r.id)
            .filter(|id| !used_g.contains(id))
            .collect(),
        unmatched_pred: pred
            .instances()
            .iter()
            .map(|r| r.id)
            .filter(|id| !used_p.contains(id))
            .collect(),
        pairs,
    })
}

fn centroid_pairs(
    gt: &TypedInstanceMap,
    pred: &TypedInstanceMap,
    table: &IouTable,
    params: &MatchParams,
) -> Result<Vec<MatchedPair>> {
    let (g, p) = (gt.instances(), pred.instances());
    if g.is_empty() || p.is_empty() {
        return Ok(Vec::new());
    }
    let gate = params.max_pair_dist;
    // Larger than any total made of admissible pairs, so the solver never
    // trades an admissible pair for a gated one.
    let sentinel = gate.max(1.0) * (g.len().min(p.len()) as f64 + 1.0) + 1.0;
    let dist: Vec<Vec<f64>> = g
        .iter()
        .map(|a| p.iter().map(|b| distance(a.centroid, b.centroid)).collect())
        .collect();
    let cost: Vec<Vec<f64>> = dist
        .iter()
        .map(|row| {
            row.iter()
                .map(|&d| if d <= gate { d } else { sentinel })
                .collect()
        })
        .collect();
    let assignment = hungarian(&cost)?;
    let mut out = Vec::with_capacity(assignment.pairs.len());
    for (i, j) in assignment.pairs {
        let d = dist[i][j];
        if d > gate {
            continue;
        }
        let iou = table.get(g[i].id, p[j].id);
        if params.iou_floor > 0.0 && iou <= params.iou_floor {
            continue;
        }
        out.push(MatchedPair {
            gt_id: g[i].id,
            pred_id: p[j].id,
            iou,
            centroid_distance: d,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{CellType, Grid, InstanceMap};

    /// 1-pixel instances at the given `(row, col)` positions, ids 1.. in order.
    fn dots(points: &[(usize, usize)]) -> TypedInstanceMap {
        let mut g = Grid::filled(40, 40, 0u32);
        for (k, &(r, c)) in points.iter().enumerate() {
            *g.get_mut(r, c) = k as u32 + 1;
        }
        TypedInstanceMap::uniform(InstanceMap::new(g), CellType::Lymphocyte)
    }

    #[test]
    fn identical_maps_pair_everything() {
        let m = dots(&[(3, 3), (10, 20), (30, 5)]);
        for mode in [MatchMode::Iou, MatchMode::Centroid] {
            let r = match_instances(&m, &m, mode, &MatchParams::default()).unwrap();
            assert_eq!(r.tp(), 3);
            assert!(r.unmatched_gt.is_empty() && r.unmatched_pred.is_empty());
        }
    }

    #[test]
    fn gate_leaves_far_prediction_unmatched() {
        let gt = dots(&[(10, 10)]);
        let pred = dots(&[(11, 10), (30, 30)]);
        let r = match_instances(&gt, &pred, MatchMode::Centroid, &MatchParams::default()).unwrap();
        assert_eq!(r.pairs.len(), 1);
        assert_eq!((r.pairs[0].gt_id, r.pairs[0].pred_id), (1, 1));
        assert_eq!(r.pairs[0].centroid_distance, 1.0);
        assert_eq!(r.unmatched_pred, vec![2]);
    }

    #[test]
    fn optimal_beats_greedy() {
        // gt1-pred1 = 2 is the closest pair, but taking it forces gt2-pred2 = 12;
        // crossing both pairs costs 5 + 5.
        let gt = dots(&[(10, 10), (10, 17)]);
        let pred = dots(&[(10, 12), (10, 5)]);
        let r = match_instances(&gt, &pred, MatchMode::Centroid, &MatchParams::default()).unwrap();
        let got: Vec<(u32, u32)> = r.pairs.iter().map(|p| (p.gt_id, p.pred_id)).collect();
        assert_eq!(got, vec![(1, 2), (2, 1)]);
    }

    #[test]
    fn unknown_mode_rejected() {
        assert!("nearest".parse::<MatchMode>().is_err());
        assert_eq!(
            "centroid".parse::<MatchMode>().unwrap(),
            MatchMode::Centroid
        );
    }

    #[test]
    fn iou_floor_filters_centroid_pairs() {
        let gt = dots(&[(10, 10)]);
        let pred = dots(&[(10, 11)]);
        let params = MatchParams {
            iou_floor: 0.1,
            ..Default::default()
        };
        let r = match_instances(&gt, &pred, MatchMode::Centroid, &params).unwrap();
        assert!(r.pairs.is_empty());
        assert_eq!(r.unmatched_gt, vec![1]);
    }
}
