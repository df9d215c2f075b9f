use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::provider::ContourProvider;
use super::ConsensusParams;
use crate::domain::{rasterize, AnnotationSet, CellType, Mask};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ExpandedNucleus {
    pub x: f64,
    pub y: f64,
    pub types: Vec<CellType>,
    pub mask: Mask,
}

/// One rater's annotations with a mask per nucleus.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpandedSet {
    pub rater_id: String,
    pub tile_id: String,
    pub height: usize,
    pub width: usize,
    pub nuclei: Vec<ExpandedNucleus>,
    /// Nuclei dropped because no mask could be produced.
    pub failures: usize,
}

/// Gives every nucleus a mask. Explicit contours are rasterized; bare points
/// go through `provider`.
pub fn expand_contours(ann: &AnnotationSet, provider: &dyn ContourProvider) -> Result<ExpandedSet> {
    ann.validate()?;
    let (h, w) = (ann.height, ann.width);
    let mut nuclei = Vec::with_capacity(ann.nuclei.len());
    let mut failures = 0;
    for (k, n) in ann.nuclei.iter().enumerate() {
        let mask = match &n.contour {
            Some(poly) => rasterize(poly, h, w),
            None => provider.expand(&ann.tile_id, (n.x, n.y), h, w),
        };
        match mask {
            Ok(m) if !m.is_empty() => nuclei.push(ExpandedNucleus {
                x: n.x,
                y: n.y,
                types: n.types.clone(),
                mask: m,
            }),
            Ok(_) => {
                log::warn!(
                    "{}/{}: nucleus {k} has an empty mask, dropped",
                    ann.tile_id,
                    ann.rater_id
                );
                failures += 1;
            }
            Err(e) => {
                log::warn!(
                    "{}/{}: nucleus {k}: {e}, dropped",
                    ann.tile_id,
                    ann.rater_id
                );
                failures += 1;
            }
        }
    }
    Ok(ExpandedSet {
        rater_id: ann.rater_id.clone(),
        tile_id: ann.tile_id.clone(),
        height: h,
        width: w,
        nuclei,
        failures,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterMember {
    pub rater_id: String,
    /// Position in the rater's expanded nuclei.
    pub index: usize,
    pub x: f64,
    pub y: f64,
    pub types: Vec<CellType>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    /// Sorted by `(rater_id, x, y)`; at most one per rater.
    pub members: Vec<ClusterMember>,
}

impl Cluster {
    pub fn raters(&self) -> BTreeSet<&str> {
        self.members.iter().map(|m| m.rater_id.as_str()).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterSet {
    pub tile_id: String,
    pub height: usize,
    pub width: usize,
    pub clusters: Vec<Cluster>,
}

struct Node<'a> {
    rater: &'a str,
    index: usize,
    n: &'a ExpandedNucleus,
    bbox: (usize, usize, usize, usize),
}

fn node_cmp(a: &Node, b: &Node) -> Ordering {
    a.rater
        .cmp(b.rater)
        .then(a.n.x.total_cmp(&b.n.x))
        .then(a.n.y.total_cmp(&b.n.y))
        .then(a.index.cmp(&b.index))
}

fn bbox(m: &Mask) -> (usize, usize, usize, usize) {
    let mut b = (usize::MAX, usize::MAX, 0, 0);
    for (r, c) in m.coords() {
        b = (b.0.min(r), b.1.min(c), b.2.max(r), b.3.max(c));
    }
    b
}

fn disjoint(a: (usize, usize, usize, usize), b: (usize, usize, usize, usize)) -> bool {
    a.2 < b.0 || b.2 < a.0 || a.3 < b.1 || b.3 < a.1
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

/// Components of the subgraph induced by `nodes` (ascending), each ascending.
fn components(nodes: &[usize], adj: &[BTreeMap<usize, f64>]) -> Vec<Vec<usize>> {
    let inside: BTreeSet<usize> = nodes.iter().copied().collect();
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for &s in nodes {
        if !seen.insert(s) {
            continue;
        }
        let mut comp = vec![s];
        let mut stack = vec![s];
        while let Some(u) = stack.pop() {
            for &v in adj[u].keys() {
                if inside.contains(&v) && seen.insert(v) {
                    comp.push(v);
                    stack.push(v);
                }
            }
        }
        comp.sort_unstable();
        out.push(comp);
    }
    out
}

/// Groups nuclei of different raters whose masks overlap with IoU above the
/// threshold, then splits groups until no rater appears twice.
pub fn cluster_annotations(sets: &[ExpandedSet], params: &ConsensusParams) -> Result<ClusterSet> {
    params.validate()?;
    if sets.len() < 2 {
        return Err(Error::invalid(format!(
            "consensus needs at least 2 raters, got {}",
            sets.len()
        )));
    }
    let first = &sets[0];
    let mut raters = BTreeSet::new();
    for s in sets {
        if !raters.insert(s.rater_id.as_str()) {
            return Err(Error::invalid(format!(
                "duplicate rater id {:?}",
                s.rater_id
            )));
        }
        if (s.tile_id.as_str(), s.height, s.width)
            != (first.tile_id.as_str(), first.height, first.width)
        {
            return Err(Error::invalid(format!(
                "rater {} annotates {} ({}x{}), rater {} annotates {} ({}x{})",
                first.rater_id,
                first.tile_id,
                first.width,
                first.height,
                s.rater_id,
                s.tile_id,
                s.width,
                s.height
            )));
        }
    }

    let mut nodes: Vec<Node> = sets
        .iter()
        .flat_map(|s| {
            s.nuclei.iter().enumerate().map(|(index, n)| Node {
                rater: &s.rater_id,
                index,
                n,
                bbox: bbox(&n.mask),
            })
        })
        .collect();
    nodes.sort_by(node_cmp);

    let k = nodes.len();
    let mut adj: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); k];
    let mut parent: Vec<usize> = (0..k).collect();
    for i in 0..k {
        for j in i + 1..k {
            let (a, b) = (&nodes[i], &nodes[j]);
            if a.rater == b.rater || disjoint(a.bbox, b.bbox) {
                continue;
            }
            let iou = a.n.mask.iou(&b.n.mask);
            if iou > params.iou_threshold {
                adj[i].insert(j, iou);
                adj[j].insert(i, iou);
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                parent[ri.max(rj)] = ri.min(rj);
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..k {
        let r = find(&mut parent, i);
        groups.entry(r).or_default().push(i);
    }

    let mut pending: Vec<Vec<usize>> = groups.into_values().collect();
    let mut done: Vec<Vec<usize>> = Vec::new();
    while let Some(comp) = pending.pop() {
        let mut best: BTreeMap<&str, (usize, f64)> = BTreeMap::new();
        let mut duplicated = false;
        for &u in &comp {
            let score: f64 = adj[u]
                .iter()
                .filter(|(v, _)| comp.binary_search(v).is_ok())
                .map(|(_, w)| w)
                .sum();
            match best.get_mut(nodes[u].rater) {
                None => {
                    best.insert(nodes[u].rater, (u, score));
                }
                Some(slot) => {
                    duplicated = true;
                    // Nodes are visited in key order, so ties keep the first.
                    if score > slot.1 {
                        *slot = (u, score);
                    }
                }
            }
        }
        if !duplicated {
            done.push(comp);
            continue;
        }
        let mut kept: Vec<usize> = best.values().map(|&(u, _)| u).collect();
        kept.sort_unstable();
        let rest: Vec<usize> = comp
            .iter()
            .copied()
            .filter(|u| kept.binary_search(u).is_err())
            .collect();
        pending.extend(components(&kept, &adj));
        pending.extend(components(&rest, &adj));
    }
    done.sort();

    let clusters = done
        .into_iter()
        .map(|comp| Cluster {
            members: comp
                .into_iter()
                .map(|u| ClusterMember {
                    rater_id: nodes[u].rater.to_string(),
                    index: nodes[u].index,
                    x: nodes[u].n.x,
                    y: nodes[u].n.y,
                    types: nodes[u].n.types.clone(),
                })
                .collect(),
        })
        .collect();
    Ok(ClusterSet {
        tile_id: first.tile_id.clone(),
        height: first.height,
        width: first.width,
        clusters,
    })
}
