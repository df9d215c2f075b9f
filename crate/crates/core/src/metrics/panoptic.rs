use std::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};

use crate::domain::InstanceMap;
use crate::error::Result;
use crate::matching::pairwise_iou;

/// Pooled detection/segmentation counts; addition is the aggregation monoid.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PqCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    /// Sum of IoU over true-positive pairs.
    pub iou_sum: f64,
}

impl PqCounts {
    /// `TP / (TP + FP/2 + FN/2)`, 0 on an empty denominator.
    pub fn dq(&self) -> f64 {
        let denom = self.tp as f64 + 0.5 * self.fp as f64 + 0.5 * self.fn_ as f64;
        if denom == 0.0 {
            0.0
        } else {
            self.tp as f64 / denom
        }
    }

    /// Mean IoU over true positives, 0 without any.
    pub fn sq(&self) -> f64 {
        if self.tp == 0 {
            0.0
        } else {
            self.iou_sum / self.tp as f64
        }
    }

    pub fn pq(&self) -> f64 {
        self.dq() * self.sq()
    }

    pub fn is_empty(&self) -> bool {
        self.tp == 0 && self.fp == 0 && self.fn_ == 0
    }
}

impl Add for PqCounts {
    type Output = PqCounts;

    fn add(self, o: PqCounts) -> PqCounts {
        PqCounts {
            tp: self.tp + o.tp,
            fp: self.fp + o.fp,
            fn_: self.fn_ + o.fn_,
            iou_sum: self.iou_sum + o.iou_sum,
        }
    }
}

impl AddAssign for PqCounts {
    fn add_assign(&mut self, o: PqCounts) {
        *self = *self + o;
    }
}

impl<'a> std::iter::Sum<&'a PqCounts> for PqCounts {
    fn sum<I: Iterator<Item = &'a PqCounts>>(iter: I) -> PqCounts {
        iter.fold(PqCounts::default(), |a, b| a + *b)
    }
}

/// Binary panoptic quality of one tile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PanopticQuality {
    pub counts: PqCounts,
    pub dq: f64,
    pub sq: f64,
    pub pq: f64,
    /// Neither map has an instance; scores are reported as 1.
    pub both_empty: bool,
}

impl PanopticQuality {
    pub fn from_counts(counts: PqCounts) -> Self {
        if counts.is_empty() {
            return PanopticQuality {
                counts,
                dq: 1.0,
                sq: 1.0,
                pq: 1.0,
                both_empty: true,
            };
        }
        let (dq, sq) = (counts.dq(), counts.sq());
        PanopticQuality {
            counts,
            dq,
            sq,
            pq: dq * sq,
            both_empty: false,
        }
    }
}

/// Detection counts treating every nucleus as one class: pairs with IoU above
/// 0.5 are true positives (such pairs are necessarily one-to-one), the rest
/// of each side are false positives / negatives.
pub fn panoptic_quality(gt: &InstanceMap, pred: &InstanceMap) -> Result<PanopticQuality> {
    let table = pairwise_iou(gt, pred)?;
    let mut counts = PqCounts::default();
    for (_, iou) in table.iter() {
        if iou > 0.5 {
            counts.tp += 1;
            counts.iou_sum += iou;
        }
    }
    counts.fn_ = gt.instance_count() as u64 - counts.tp;
    counts.fp = pred.instance_count() as u64 - counts.tp;
    Ok(PanopticQuality::from_counts(counts))
}
