use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::domain::{CellType, Grid, InstanceMap, TypedInstanceMap};
use crate::error::{Error, Result};

/// How member pixels vote for an instance's class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VoteMode {
    /// Sum class probabilities over member pixels.
    #[default]
    ProbabilitySum,
    /// Count per-pixel argmax classes.
    ArgmaxCount,
}

/// Relative gap under which two probability sums count as tied. Sums of f32
/// probabilities accumulate rounding error of this order.
const SUM_TIE_TOLERANCE: f64 = 1e-6;

/// Majority vote of the non-background `nt` channels within each instance.
///
/// Ties go to the lower class code.
pub fn assign_types(
    map: &InstanceMap,
    nt: &[Grid<f32>],
    mode: VoteMode,
) -> Result<TypedInstanceMap> {
    if nt.len() < 2 {
        return Err(Error::shape(format!(
            "nt map needs background plus classes, got {} channel(s)",
            nt.len()
        )));
    }
    if nt.len() > CellType::COUNT + 1 {
        return Err(Error::shape(format!(
            "nt map has {} channels, at most {} are typed",
            nt.len(),
            CellType::COUNT + 1
        )));
    }
    if let Some(bad) = nt.iter().find(|g| g.shape() != map.shape()) {
        return Err(Error::shape(format!(
            "instance map is {:?} but nt channel is {:?}",
            map.shape(),
            bad.shape()
        )));
    }
    let classes = nt.len() - 1;
    let mut slot: HashMap<u32, usize> = HashMap::new();
    let mut acc: Vec<Vec<f64>> = Vec::new();
    let planes: Vec<&[f32]> = nt.iter().map(|g| g.as_slice()).collect();
    for (p, &id) in map.labels().as_slice().iter().enumerate() {
        if id == 0 {
            continue;
        }
        let k = *slot.entry(id).or_insert_with(|| {
            acc.push(vec![0.0; classes]);
            acc.len() - 1
        });
        let row = &mut acc[k];
        match mode {
            VoteMode::ProbabilitySum => {
                for (c, plane) in planes[1..].iter().enumerate() {
                    row[c] += plane[p] as f64;
                }
            }
            VoteMode::ArgmaxCount => {
                let mut best = 0;
                for c in 1..classes {
                    if planes[c + 1][p] > planes[best + 1][p] {
                        best = c;
                    }
                }
                row[best] += 1.0;
            }
        }
    }
    let tol = match mode {
        VoteMode::ProbabilitySum => SUM_TIE_TOLERANCE,
        VoteMode::ArgmaxCount => 0.0,
    };
    let labels: BTreeMap<u32, Vec<CellType>> = slot
        .into_iter()
        .map(|(id, k)| {
            let votes = &acc[k];
            let max = votes.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let floor = max - tol * max.abs().max(1.0);
            let winner = votes
                .iter()
                .position(|&s| s >= floor)
                .expect("at least one class");
            let t = CellType::from_channel(winner + 1).expect("channel count checked");
            (id, vec![t])
        })
        .collect();
    TypedInstanceMap::new(map.clone(), labels)
}
