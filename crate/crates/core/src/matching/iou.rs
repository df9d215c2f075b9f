use std::collections::{BTreeMap, HashMap};

use crate::domain::InstanceMap;
use crate::error::{Error, Result};

/// Sparse IoU table between two instance maps; only overlapping pairs appear.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct IouTable {
    entries: BTreeMap<(u32, u32), f64>,
}

impl IouTable {
    pub fn get(&self, gt: u32, pred: u32) -> f64 {
        self.entries.get(&(gt, pred)).copied().unwrap_or(0.0)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// `((gt_id, pred_id), iou)` in ascending id order.
    pub fn iter(&self) -> impl Iterator<Item = ((u32, u32), f64)> + '_ {
        self.entries.iter().map(|(&k, &v)| (k, v))
    }
}

/// IoU of every overlapping (gt, pred) instance pair, from one joint pass.
pub fn pairwise_iou(gt: &InstanceMap, pred: &InstanceMap) -> Result<IouTable> {
    if gt.shape() != pred.shape() {
        return Err(Error::shape(format!(
            "ground truth is {:?} but prediction is {:?}",
            gt.shape(),
            pred.shape()
        )));
    }
    let mut inter: HashMap<(u32, u32), u64> = HashMap::new();
    let mut area_g: HashMap<u32, u64> = HashMap::new();
    let mut area_p: HashMap<u32, u64> = HashMap::new();
    for (&g, &p) in gt.labels().as_slice().iter().zip(pred.labels().as_slice()) {
        if g != 0 {
            *area_g.entry(g).or_default() += 1;
        }
        if p != 0 {
            *area_p.entry(p).or_default() += 1;
            if g != 0 {
                *inter.entry((g, p)).or_default() += 1;
            }
        }
    }
    let entries = inter
        .into_iter()
        .map(|((g, p), i)| {
            let union = area_g[&g] + area_p[&p] - i;
            ((g, p), i as f64 / union as f64)
        })
        .collect();
    Ok(IouTable { entries })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Grid;

    fn squares(offset: usize) -> (InstanceMap, InstanceMap) {
        let gt = Grid::from_vec(
            30,
            30,
            (0..900)
                .map(|i| if i / 30 < 10 && i % 30 < 10 { 1 } else { 0 })
                .collect(),
        )
        .unwrap();
        let pred = Grid::from_vec(
            30,
            30,
            (0..900)
                .map(|i| {
                    let r = i / 30;
                    if r >= offset && r < offset + 10 && i % 30 < 10 {
                        9
                    } else {
                        0
                    }
                })
                .collect(),
        )
        .unwrap();
        (InstanceMap::new(gt), InstanceMap::new(pred))
    }

    #[test]
    fn half_overlap_is_one_third() {
        let (g, p) = squares(5);
        let t = pairwise_iou(&g, &p).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t.get(1, 9), 50.0 / 150.0);
    }

    #[test]
    fn identity_and_disjoint() {
        let (g, _) = squares(0);
        let t = pairwise_iou(&g, &g).unwrap();
        assert_eq!(t.get(1, 1), 1.0);
        let (g, p) = squares(15);
        assert!(pairwise_iou(&g, &p).unwrap().is_empty());
        assert!(pairwise_iou(&g, &InstanceMap::empty(3, 3)).is_err());
    }
}
