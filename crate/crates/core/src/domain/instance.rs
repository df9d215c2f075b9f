use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::{CellType, Grid, Mask};
use crate::error::{Error, Result};

/// Dense per-pixel instance labels; 0 is background.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceMap {
    labels: Grid<u32>,
}

/// Pixel count and coordinate sums of one instance.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct InstanceStats {
    pub area: usize,
    pub sum_row: f64,
    pub sum_col: f64,
}

impl InstanceStats {
    pub fn centroid(&self) -> (f64, f64) {
        let n = self.area as f64;
        (self.sum_row / n, self.sum_col / n)
    }
}

impl InstanceMap {
    pub fn new(labels: Grid<u32>) -> Self {
        InstanceMap { labels }
    }

    pub fn empty(height: usize, width: usize) -> Self {
        InstanceMap {
            labels: Grid::filled(height, width, 0),
        }
    }

    pub fn from_vec(height: usize, width: usize, labels: Vec<u32>) -> Result<Self> {
        Grid::from_vec(height, width, labels).map(InstanceMap::new)
    }

    pub fn height(&self) -> usize {
        self.labels.height()
    }

    pub fn width(&self) -> usize {
        self.labels.width()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.labels.shape()
    }

    pub fn labels(&self) -> &Grid<u32> {
        &self.labels
    }

    pub fn into_labels(self) -> Grid<u32> {
        self.labels
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> u32 {
        *self.labels.get(row, col)
    }

    /// Sorted distinct positive ids.
    pub fn ids(&self) -> Vec<u32> {
        self.stats().into_keys().collect()
    }

    pub fn instance_count(&self) -> usize {
        self.stats().len()
    }

    pub fn stats(&self) -> BTreeMap<u32, InstanceStats> {
        let w = self.width();
        let mut acc: HashMap<u32, InstanceStats> = HashMap::new();
        for (i, &id) in self.labels.as_slice().iter().enumerate() {
            if id == 0 {
                continue;
            }
            let s = acc.entry(id).or_default();
            s.area += 1;
            s.sum_row += (i / w) as f64;
            s.sum_col += (i % w) as f64;
        }
        acc.into_iter().collect()
    }

    pub fn mask(&self, id: u32) -> Mask {
        let pixels = self
            .labels
            .as_slice()
            .iter()
            .enumerate()
            .filter(|(_, &v)| v == id && id != 0)
            .map(|(i, _)| i as u32)
            .collect();
        Mask::from_indices(self.height(), self.width(), pixels).expect("indices in range")
    }

    /// Masks of every instance, keyed by id.
    pub fn masks(&self) -> BTreeMap<u32, Mask> {
        let mut px: HashMap<u32, Vec<u32>> = HashMap::new();
        for (i, &id) in self.labels.as_slice().iter().enumerate() {
            if id != 0 {
                px.entry(id).or_default().push(i as u32);
            }
        }
        px.into_iter()
            .map(|(id, p)| {
                let m =
                    Mask::from_indices(self.height(), self.width(), p).expect("indices in range");
                (id, m)
            })
            .collect()
    }

    pub fn canonicalize(&self) -> InstanceMap {
        canonicalize(self)
    }

    pub fn is_canonical(&self) -> bool {
        let mut next = 1u32;
        for &v in self.labels.as_slice() {
            if v == 0 {
                continue;
            }
            if v == next {
                next += 1;
            } else if v > next {
                return false;
            }
        }
        true
    }
}

/// Relabels ids to `1..=N` in order of each instance's first pixel (row-major).
pub fn canonicalize(map: &InstanceMap) -> InstanceMap {
    let mut remap: HashMap<u32, u32> = HashMap::new();
    let mut next = 1u32;
    let labels = map.labels.map(|&v| {
        if v == 0 {
            return 0;
        }
        *remap.entry(v).or_insert_with(|| {
            let id = next;
            next += 1;
            id
        })
    });
    InstanceMap { labels }
}

/// Per-instance record of a [`TypedInstanceMap`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceRecord {
    pub id: u32,
    pub labels: Vec<CellType>,
    /// `(row, col)` mean of member pixel indices.
    pub centroid: (f64, f64),
    pub area: usize,
}

impl InstanceRecord {
    /// First label; predictions carry exactly one.
    pub fn primary(&self) -> CellType {
        self.labels[0]
    }
}

/// Instance map plus one typed record per instance, sorted by id.
#[derive(Debug, Clone, PartialEq)]
pub struct TypedInstanceMap {
    map: InstanceMap,
    instances: Vec<InstanceRecord>,
}

impl TypedInstanceMap {
    /// Pairs a map with labels; centroids and areas are computed from pixels.
    ///
    /// `labels` must name exactly the positive ids present in `map`, each with a
    /// non-empty list.
    pub fn new(map: InstanceMap, labels: BTreeMap<u32, Vec<CellType>>) -> Result<Self> {
        let stats = map.stats();
        if stats.len() != labels.len() || !stats.keys().eq(labels.keys()) {
            let missing: Vec<_> = stats.keys().filter(|k| !labels.contains_key(k)).collect();
            let extra: Vec<_> = labels.keys().filter(|k| !stats.contains_key(k)).collect();
            return Err(Error::invalid(format!(
                "instance ids and label records differ (unlabeled {missing:?}, absent {extra:?})"
            )));
        }
        let mut instances = Vec::with_capacity(stats.len());
        for (id, mut l) in labels {
            if l.is_empty() {
                return Err(Error::invalid(format!(
                    "instance {id} has an empty label list"
                )));
            }
            if l.len() > 1 {
                l.sort();
                l.dedup();
            }
            let s = stats[&id];
            instances.push(InstanceRecord {
                id,
                labels: l,
                centroid: s.centroid(),
                area: s.area,
            });
        }
        Ok(TypedInstanceMap { map, instances })
    }

    /// Every instance gets the same single label.
    pub fn uniform(map: InstanceMap, label: CellType) -> Self {
        let labels = map.ids().into_iter().map(|id| (id, vec![label])).collect();
        Self::new(map, labels).expect("labels cover every id")
    }

    pub fn empty(height: usize, width: usize) -> Self {
        TypedInstanceMap {
            map: InstanceMap::empty(height, width),
            instances: Vec::new(),
        }
    }

    pub fn map(&self) -> &InstanceMap {
        &self.map
    }

    pub fn instances(&self) -> &[InstanceRecord] {
        &self.instances
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.map.shape()
    }

    pub fn record(&self, id: u32) -> Option<&InstanceRecord> {
        self.instances
            .binary_search_by_key(&id, |r| r.id)
            .ok()
            .map(|i| &self.instances[i])
    }

    pub fn is_multilabel(&self) -> bool {
        self.instances.iter().any(|r| r.labels.len() > 1)
    }

    pub fn label_map(&self) -> BTreeMap<u32, Vec<CellType>> {
        self.instances
            .iter()
            .map(|r| (r.id, r.labels.clone()))
            .collect()
    }

    /// Canonical ids with labels carried along.
    pub fn canonicalize(&self) -> TypedInstanceMap {
        let canon = canonicalize(&self.map);
        let mut relabel: BTreeMap<u32, u32> = BTreeMap::new();
        for (&old, &new) in self
            .map
            .labels
            .as_slice()
            .iter()
            .zip(canon.labels.as_slice())
        {
            if old != 0 {
                relabel.entry(old).or_insert(new);
            }
        }
        let labels = self
            .instances
            .iter()
            .map(|r| (relabel[&r.id], r.labels.clone()))
            .collect();
        TypedInstanceMap::new(canon, labels).expect("relabeling preserves ids")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map(rows: &[&[u32]]) -> InstanceMap {
        let h = rows.len();
        let w = rows[0].len();
        InstanceMap::from_vec(h, w, rows.concat()).unwrap()
    }

    #[test]
    fn canonicalize_single_id() {
        let m = map(&[&[0, 5], &[5, 0]]);
        assert_eq!(canonicalize(&m), map(&[&[0, 1], &[1, 0]]));
    }

    #[test]
    fn canonicalize_empty() {
        let m = InstanceMap::empty(3, 4);
        let c = canonicalize(&m);
        assert_eq!(c, m);
        assert_eq!(c.instance_count(), 0);
    }

    #[test]
    fn canonicalize_orders_by_first_pixel() {
        let m = map(&[&[0, 3, 3], &[7, 7, 3]]);
        assert_eq!(canonicalize(&m), map(&[&[0, 1, 1], &[2, 2, 1]]));
        assert!(canonicalize(&m).is_canonical());
        assert!(!m.is_canonical());
    }

    #[test]
    fn typed_map_requires_matching_ids() {
        let m = map(&[&[0, 1], &[2, 2]]);
        let mut labels = BTreeMap::new();
        labels.insert(1, vec![CellType::Lymphocyte]);
        assert!(TypedInstanceMap::new(m.clone(), labels.clone()).is_err());
        labels.insert(2, vec![]);
        assert!(TypedInstanceMap::new(m.clone(), labels.clone()).is_err());
        labels.insert(2, vec![CellType::Plasmocyte, CellType::Lymphocyte]);
        let t = TypedInstanceMap::new(m, labels).unwrap();
        assert_eq!(
            t.record(2).unwrap().labels,
            vec![CellType::Lymphocyte, CellType::Plasmocyte]
        );
        assert_eq!(t.record(2).unwrap().centroid, (1.0, 0.5));
        assert_eq!(t.record(2).unwrap().area, 2);
        assert!(t.is_multilabel());
    }
}
