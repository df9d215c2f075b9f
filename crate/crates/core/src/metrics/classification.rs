use std::collections::{BTreeMap, HashSet};
use std::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};

use crate::domain::{CellType, TypedInstanceMap};
use crate::error::{Error, Result};
use crate::matching::MatchResult;

/// Detection and classification counts of one cell type.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TypeCounts {
    pub tp_d: u64,
    pub fn_d: u64,
    pub fp_d: u64,
    pub tp_c: u64,
    pub tn_c: u64,
    pub fp_c: u64,
    pub fn_c: u64,
}

impl Add for TypeCounts {
    type Output = TypeCounts;

    fn add(self, o: TypeCounts) -> TypeCounts {
        TypeCounts {
            tp_d: self.tp_d + o.tp_d,
            fn_d: self.fn_d + o.fn_d,
            fp_d: self.fp_d + o.fp_d,
            tp_c: self.tp_c + o.tp_c,
            tn_c: self.tn_c + o.tn_c,
            fp_c: self.fp_c + o.fp_c,
            fn_c: self.fn_c + o.fn_c,
        }
    }
}

impl TypeCounts {
    /// Whether the type occurs on either side (as a label or a prediction).
    pub fn is_present(&self) -> bool {
        self.tp_c + self.fp_c + self.fn_c + self.fp_d + self.fn_d > 0
    }

    /// `2(TPc+TNc) / (2(TPc+TNc) + 2FPc + 2FNc + FPd + FNd)`, 0 on an empty
    /// denominator.
    pub fn f1(&self) -> f64 {
        let good = 2.0 * (self.tp_c + self.tn_c) as f64;
        let denom = good
            + 2.0 * self.fp_c as f64
            + 2.0 * self.fn_c as f64
            + self.fp_d as f64
            + self.fn_d as f64;
        if denom == 0.0 {
            0.0
        } else {
            good / denom
        }
    }
}

/// Per-type counts for the whole ontology.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ClassCounts {
    per_type: [TypeCounts; CellType::COUNT],
}

impl ClassCounts {
    pub fn get(&self, t: CellType) -> &TypeCounts {
        &self.per_type[t.code() as usize]
    }

    pub fn get_mut(&mut self, t: CellType) -> &mut TypeCounts {
        &mut self.per_type[t.code() as usize]
    }

    pub fn iter(&self) -> impl Iterator<Item = (CellType, &TypeCounts)> {
        CellType::ALL.iter().copied().zip(self.per_type.iter())
    }

    pub fn present_types(&self) -> Vec<CellType> {
        self.iter()
            .filter(|(_, c)| c.is_present())
            .map(|(t, _)| t)
            .collect()
    }
}

impl Add for ClassCounts {
    type Output = ClassCounts;

    fn add(mut self, o: ClassCounts) -> ClassCounts {
        self += o;
        self
    }
}

impl AddAssign for ClassCounts {
    fn add_assign(&mut self, o: ClassCounts) {
        for (a, b) in self.per_type.iter_mut().zip(o.per_type.iter()) {
            *a = *a + *b;
        }
    }
}

impl<'a> std::iter::Sum<&'a ClassCounts> for ClassCounts {
    fn sum<I: Iterator<Item = &'a ClassCounts>>(iter: I) -> ClassCounts {
        iter.fold(ClassCounts::default(), |a, b| a + *b)
    }
}

// Serialized as a name-keyed map so the JSON stays readable.
impl Serialize for ClassCounts {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let m: BTreeMap<&str, &TypeCounts> = self.iter().map(|(t, c)| (t.name(), c)).collect();
        m.serialize(s)
    }
}

impl<'de> Deserialize<'de> for ClassCounts {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let m: BTreeMap<CellType, TypeCounts> = BTreeMap::deserialize(d)?;
        let mut out = ClassCounts::default();
        for (t, c) in m {
            *out.get_mut(t) = c;
        }
        Ok(out)
    }
}

pub fn f1_from_counts(c: &ClassCounts, t: CellType) -> f64 {
    c.get(t).f1()
}

fn predicted_type(pred: &TypedInstanceMap, id: u32) -> Result<CellType> {
    pred.record(id)
        .map(|r| r.primary())
        .ok_or_else(|| Error::invalid(format!("match refers to missing prediction {id}")))
}

fn gt_labels(gt: &TypedInstanceMap, id: u32) -> Result<&[CellType]> {
    gt.record(id).map(|r| r.labels.as_slice()).ok_or_else(|| {
        Error::invalid(format!(
            "match refers to missing ground-truth instance {id}"
        ))
    })
}

/// Single-label counts: each paired instance lands in exactly one of
/// TPc/TNc/FPc/FNc for every type; unpaired instances feed FPd/FNd of their type.
pub fn classification_counts(
    gt: &TypedInstanceMap,
    pred: &TypedInstanceMap,
    m: &MatchResult,
) -> Result<ClassCounts> {
    if let Some(r) = gt.instances().iter().find(|r| r.labels.len() != 1) {
        return Err(Error::invalid(format!(
            "ground-truth instance {} carries {} labels; use multilabel_counts",
            r.id,
            r.labels.len()
        )));
    }
    let mut out = ClassCounts::default();
    for pair in &m.pairs {
        let g = gt_labels(gt, pair.gt_id)?[0];
        let p = predicted_type(pred, pair.pred_id)?;
        for t in CellType::ALL {
            let c = out.get_mut(t);
            c.tp_d += 1;
            match (g == t, p == t) {
                (true, true) => c.tp_c += 1,
                (false, false) => c.tn_c += 1,
                (false, true) => c.fp_c += 1,
                (true, false) => c.fn_c += 1,
            }
        }
    }
    for &id in &m.unmatched_pred {
        out.get_mut(predicted_type(pred, id)?).fp_d += 1;
    }
    for &id in &m.unmatched_gt {
        out.get_mut(gt_labels(gt, id)?[0]).fn_d += 1;
    }
    Ok(out)
}

/// Counts against ground truth that may list several admissible types.
///
/// For type `t`, ground-truth list `L` and prediction `p` of a pair: TPc when
/// `p = t` and `t` in `L`; TNc when `p != t` and `t` not in `L`; FPc when
/// `p = t` and `t` not in `L`; FNc when `t` in `L`, `p != t` and `p` not in `L`.
/// A pair with `t` in `L`, `p != t` but `p` in `L` counts for none of the four.
/// The FNc clause reads "prediction is not t"; the literal "prediction is t"
/// would contradict "prediction not in L".
pub fn multilabel_counts(
    gt: &TypedInstanceMap,
    pred: &TypedInstanceMap,
    m: &MatchResult,
) -> Result<ClassCounts> {
    let mut out = ClassCounts::default();
    for pair in &m.pairs {
        let labels = gt_labels(gt, pair.gt_id)?;
        if labels.is_empty() {
            return Err(Error::invalid(format!(
                "ground-truth instance {} has no labels",
                pair.gt_id
            )));
        }
        let set: HashSet<CellType> = labels.iter().copied().collect();
        let p = predicted_type(pred, pair.pred_id)?;
        for t in CellType::ALL {
            let c = out.get_mut(t);
            c.tp_d += 1;
            match (set.contains(&t), p == t) {
                (true, true) => c.tp_c += 1,
                (false, false) => c.tn_c += 1,
                (false, true) => c.fp_c += 1,
                (true, false) => {
                    if !set.contains(&p) {
                        c.fn_c += 1;
                    }
                }
            }
        }
    }
    for &id in &m.unmatched_pred {
        out.get_mut(predicted_type(pred, id)?).fp_d += 1;
    }
    for &id in &m.unmatched_gt {
        let labels = gt_labels(gt, id)?;
        if labels.is_empty() {
            return Err(Error::invalid(format!(
                "ground-truth instance {id} has no labels"
            )));
        }
        for &t in labels {
            out.get_mut(t).fn_d += 1;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{Grid, InstanceMap};
    use crate::matching::{MatchMode, MatchedPair};

    fn tile(labels: &[&[CellType]]) -> TypedInstanceMap {
        let n = labels.len();
        let map = InstanceMap::from_vec(1, n, (1..=n as u32).collect()).unwrap();
        let l = labels
            .iter()
            .enumerate()
            .map(|(i, l)| (i as u32 + 1, l.to_vec()))
            .collect();
        TypedInstanceMap::new(map, l).unwrap()
    }

    fn pairs(ids: &[(u32, u32)], ug: &[u32], up: &[u32]) -> MatchResult {
        MatchResult {
            mode: MatchMode::Centroid,
            pairs: ids
                .iter()
                .map(|&(g, p)| MatchedPair {
                    gt_id: g,
                    pred_id: p,
                    iou: 1.0,
                    centroid_distance: 0.0,
                })
                .collect(),
            unmatched_gt: ug.to_vec(),
            unmatched_pred: up.to_vec(),
        }
    }

    use CellType::*;

    #[test]
    fn agreement_gives_perfect_f1() {
        let g = tile(&[&[Lymphocyte], &[Lymphocyte], &[Fibroblast]]);
        let m = pairs(&[(1, 1), (2, 2), (3, 3)], &[], &[]);
        let c = classification_counts(&g, &g, &m).unwrap();
        assert_eq!(c.get(Lymphocyte).tp_c, 2);
        assert_eq!(c.get(Fibroblast).tp_c, 1);
        for t in c.present_types() {
            assert_eq!(c.get(t).f1(), 1.0);
        }
    }

    #[test]
    fn misclassification_partition() {
        let g = tile(&[&[Lymphocyte]]);
        let p = tile(&[&[Plasmocyte]]);
        let c = classification_counts(&g, &p, &pairs(&[(1, 1)], &[], &[])).unwrap();
        assert_eq!(c.get(Lymphocyte).fn_c, 1);
        assert_eq!(c.get(Plasmocyte).fp_c, 1);
        assert_eq!(c.get(Neutrophil).tn_c, 1);
        for (_, tc) in c.iter() {
            assert_eq!(tc.tp_c + tc.tn_c + tc.fp_c + tc.fn_c, 1);
        }
    }

    #[test]
    fn unpaired_prediction_is_overdetection() {
        let g = TypedInstanceMap::new(InstanceMap::new(Grid::filled(1, 1, 0)), Default::default())
            .unwrap();
        let p = tile(&[&[Neutrophil]]);
        let c = classification_counts(&g, &p, &pairs(&[], &[], &[1])).unwrap();
        assert_eq!(c.get(Neutrophil).fp_d, 1);
    }

    #[test]
    fn single_label_rejects_lists() {
        let g = tile(&[&[Lymphocyte, Plasmocyte]]);
        let p = tile(&[&[Lymphocyte]]);
        assert!(classification_counts(&g, &p, &pairs(&[(1, 1)], &[], &[])).is_err());
    }

    #[test]
    fn multilabel_rules() {
        let g = tile(&[&[Lymphocyte, Plasmocyte]]);
        let p = tile(&[&[Lymphocyte]]);
        let c = multilabel_counts(&g, &p, &pairs(&[(1, 1)], &[], &[])).unwrap();
        assert_eq!(c.get(Lymphocyte).tp_c, 1);
        assert_eq!(
            *c.get(Plasmocyte),
            TypeCounts {
                tp_d: 1,
                ..Default::default()
            }
        );

        let g = tile(&[&[Lymphocyte]]);
        let p = tile(&[&[Plasmocyte]]);
        let c = multilabel_counts(&g, &p, &pairs(&[(1, 1)], &[], &[])).unwrap();
        assert_eq!(c.get(Plasmocyte).fp_c, 1);
        assert_eq!(c.get(Lymphocyte).fn_c, 1);

        let g = tile(&[&[Eosinophil, Neutrophil]]);
        let c = multilabel_counts(&g, &g, &pairs(&[], &[1], &[])).unwrap();
        assert_eq!(c.get(Eosinophil).fn_d, 1);
        assert_eq!(c.get(Neutrophil).fn_d, 1);
    }

    #[test]
    fn f1_formula() {
        let perfect = TypeCounts {
            tp_d: 3,
            tp_c: 3,
            ..Default::default()
        };
        assert_eq!(perfect.f1(), 1.0);
        let half = TypeCounts {
            tp_c: 1,
            fp_c: 1,
            ..Default::default()
        };
        assert_eq!(half.f1(), 0.5);
        assert_eq!(TypeCounts::default().f1(), 0.0);
    }

    #[test]
    fn counts_serialize_by_name() {
        let mut c = ClassCounts::default();
        c.get_mut(Macrophage).fp_d = 4;
        let json = serde_json::to_string(&c).unwrap();
        assert!(json.contains("\"Macrophage\":{\"tp_d\":0,\"fn_d\":0,\"fp_d\":4"));
        let back: ClassCounts = serde_json::from_str(&json).unwrap();
        assert_eq!(back, c);
    }
}
