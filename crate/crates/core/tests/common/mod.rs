//! Independent oracles and synthetic scene generators shared by the
//! integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, HashMap, HashSet};

use nuclei_kit::rng::{self, Rng};
use nuclei_kit::{CellType, Grid, InstanceMap, TypedInstanceMap};
use rand::seq::SliceRandom;
use rand::Rng as _;

pub fn gen(seed: u64) -> Rng {
    rng::seeded(seed)
}

/// Minimum total cost over all injective assignments of the smaller side,
/// summed in row order.
pub fn brute_force_assignment(cost: &[Vec<f64>]) -> f64 {
    let n = cost.len();
    let m = cost.first().map_or(0, Vec::len);
    if n == 0 || m == 0 {
        return 0.0;
    }
    if n > m {
        // Assign every column to a distinct row, then sum in row order.
        let mut best = f64::INFINITY;
        let mut rows_of_cols = vec![usize::MAX; m];
        let mut used = vec![false; n];
        fn rec_t(
            c: usize,
            cost: &[Vec<f64>],
            roc: &mut [usize],
            used: &mut [bool],
            best: &mut f64,
        ) {
            let m = roc.len();
            if c == m {
                let mut pairs: Vec<(usize, usize)> =
                    roc.iter().enumerate().map(|(c, &r)| (r, c)).collect();
                pairs.sort_unstable();
                let total: f64 = pairs.iter().map(|&(r, c)| cost[r][c]).sum();
                if total < *best {
                    *best = total;
                }
                return;
            }
            for r in 0..used.len() {
                if !used[r] {
                    used[r] = true;
                    roc[c] = r;
                    rec_t(c + 1, cost, roc, used, best);
                    used[r] = false;
                }
            }
        }
        rec_t(0, cost, &mut rows_of_cols, &mut used, &mut best);
        return best;
    }
    let mut best = f64::INFINITY;
    let mut used = vec![false; m];
    fn rec(r: usize, acc: f64, cost: &[Vec<f64>], used: &mut [bool], best: &mut f64) {
        if r == cost.len() {
            if acc < *best {
                *best = acc;
            }
            return;
        }
        for c in 0..used.len() {
            if !used[c] {
                used[c] = true;
                rec(r + 1, acc + cost[r][c], cost, used, best);
                used[c] = false;
            }
        }
    }
    rec(0, 0.0, cost, &mut used, &mut best);
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct PqOracle {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub iou_sum: f64,
    pub pairs: Vec<(u32, u32, f64)>,
}

fn pixel_sets(map: &InstanceMap) -> BTreeMap<u32, HashSet<usize>> {
    let mut sets: BTreeMap<u32, HashSet<usize>> = BTreeMap::new();
    for r in 0..map.height() {
        for c in 0..map.width() {
            let id = map.get(r, c);
            if id != 0 {
                sets.entry(id).or_default().insert(r * map.width() + c);
            }
        }
    }
    sets
}

/// Enumerates every gt x pred pair, computes IoU from explicit pixel sets and
/// keeps the pairs above one half.
pub fn brute_force_pq(gt: &InstanceMap, pred: &InstanceMap) -> PqOracle {
    let g = pixel_sets(gt);
    let p = pixel_sets(pred);
    let mut pairs = Vec::new();
    for (&gi, gs) in &g {
        for (&pi, ps) in &p {
            let inter = gs.intersection(ps).count();
            let union = gs.len() + ps.len() - inter;
            let iou = inter as f64 / union as f64;
            if iou > 0.5 {
                pairs.push((gi, pi, iou));
            }
        }
    }
    let tp = pairs.len() as u64;
    PqOracle {
        tp,
        fp: p.len() as u64 - tp,
        fn_: g.len() as u64 - tp,
        iou_sum: pairs.iter().map(|p| p.2).sum(),
        pairs,
    }
}

fn ellipse_pixels(
    h: usize,
    w: usize,
    cy: f64,
    cx: f64,
    a: f64,
    b: f64,
    theta: f64,
) -> Vec<(usize, usize)> {
    let reach = a.max(b).ceil() as i64 + 1;
    let (s, c) = theta.sin_cos();
    let mut out = Vec::new();
    for r in (cy as i64 - reach)..=(cy as i64 + reach) {
        for col in (cx as i64 - reach)..=(cx as i64 + reach) {
            if r < 0 || col < 0 || r >= h as i64 || col >= w as i64 {
                continue;
            }
            let dy = r as f64 + 0.5 - cy;
            let dx = col as f64 + 0.5 - cx;
            let u = dx * c + dy * s;
            let v = -dx * s + dy * c;
            if (u / a).powi(2) + (v / b).powi(2) <= 1.0 {
                out.push((r as usize, col as usize));
            }
        }
    }
    out
}

/// All pixels within Chebyshev distance `gap` of `px` are free.
fn clear_of(labels: &Grid<u32>, px: &[(usize, usize)], gap: usize, except: u32) -> bool {
    let (h, w) = labels.shape();
    px.iter().all(|&(r, c)| {
        let r0 = r.saturating_sub(gap);
        let c0 = c.saturating_sub(gap);
        (r0..=(r + gap).min(h - 1)).all(|rr| {
            (c0..=(c + gap).min(w - 1)).all(|cc| {
                let v = *labels.get(rr, cc);
                v == 0 || v == except
            })
        })
    })
}

fn random_type(g: &mut Rng) -> CellType {
    CellType::ALL[g.gen_range(0..CellType::COUNT - 1)]
}

fn typed(labels: Grid<u32>, types: BTreeMap<u32, Vec<CellType>>) -> TypedInstanceMap {
    TypedInstanceMap::new(InstanceMap::new(labels), types).unwrap()
}

/// Tile of `count` ellipses (semi-axes 8 to 14 px, the size of nuclei at 40x) separated by at least two
/// background pixels; fewer if the tile fills up.
pub fn separated_tile(g: &mut Rng, h: usize, w: usize, count: usize) -> TypedInstanceMap {
    let mut labels = Grid::filled(h, w, 0u32);
    let mut types = BTreeMap::new();
    let mut next = 1u32;
    let mut tries = 0;
    while (next as usize) <= count && tries < 20 * count {
        tries += 1;
        let a = g.gen_range(8.0..14.0);
        let b = g.gen_range(8.0..14.0);
        let cy = g.gen_range(0.0..h as f64);
        let cx = g.gen_range(0.0..w as f64);
        let px = ellipse_pixels(h, w, cy, cx, a, b, g.gen_range(0.0..std::f64::consts::PI));
        if px.len() < 20 || !clear_of(&labels, &px, 2, 0) {
            continue;
        }
        for &(r, c) in &px {
            *labels.get_mut(r, c) = next;
        }
        types.insert(next, vec![random_type(g)]);
        next += 1;
    }
    typed(labels, types)
}

/// Tile of `pairs` pairs of disks in contact (each pair kept two pixels away
/// from everything else) plus `singles` isolated disks.
pub fn touching_tile(
    g: &mut Rng,
    h: usize,
    w: usize,
    pairs: usize,
    singles: usize,
) -> (TypedInstanceMap, usize) {
    let mut labels = Grid::filled(h, w, 0u32);
    let mut types = BTreeMap::new();
    let mut next = 1u32;
    let mut placed_pairs = 0;
    let mut tries = 0;
    while placed_pairs < pairs && tries < 50 * pairs {
        tries += 1;
        let r1 = g.gen_range(6.0..10.0);
        let r2 = g.gen_range(6.0..10.0);
        let cy = g.gen_range(12.0..h as f64 - 12.0);
        let cx = g.gen_range(12.0..w as f64 - 12.0);
        let t: f64 = g.gen_range(0.0..std::f64::consts::TAU);
        let d = r1 + r2 - 1.0;
        let (cy2, cx2) = (cy + d * t.sin(), cx + d * t.cos());
        let a = ellipse_pixels(h, w, cy, cx, r1, r1, 0.0);
        let b: Vec<_> = ellipse_pixels(h, w, cy2, cx2, r2, r2, 0.0)
            .into_iter()
            .filter(|p| !a.contains(p))
            .collect();
        if b.len() < 60 || a.len() < 60 {
            continue;
        }
        let both: Vec<_> = a.iter().chain(&b).copied().collect();
        if !clear_of(&labels, &both, 2, 0) {
            continue;
        }
        for (px, id) in [(&a, next), (&b, next + 1)] {
            for &(r, c) in px {
                *labels.get_mut(r, c) = id;
            }
            types.insert(id, vec![random_type(g)]);
        }
        next += 2;
        placed_pairs += 1;
    }
    let mut placed = 0;
    tries = 0;
    while placed < singles && tries < 50 * singles.max(1) {
        tries += 1;
        let r = g.gen_range(6.0..10.0);
        let px = ellipse_pixels(
            h,
            w,
            g.gen_range(0.0..h as f64),
            g.gen_range(0.0..w as f64),
            r,
            r,
            0.0,
        );
        if px.len() < 60 || !clear_of(&labels, &px, 2, 0) {
            continue;
        }
        for &(rr, c) in &px {
            *labels.get_mut(rr, c) = next;
        }
        types.insert(next, vec![random_type(g)]);
        next += 1;
        placed += 1;
    }
    (typed(labels, types), placed_pairs)
}

/// Up to `max` overlapping rectangles and ellipses painted in sequence, so
/// later shapes occlude earlier ones; ids need not be contiguous.
pub fn overlapping_map(g: &mut Rng, h: usize, w: usize, max: usize) -> InstanceMap {
    let mut labels = Grid::filled(h, w, 0u32);
    let k = g.gen_range(0..=max);
    let mut ids: Vec<u32> = (1..=(3 * max as u32).max(1)).collect();
    ids.shuffle(g);
    for &id in ids.iter().take(k) {
        let px = if g.gen_bool(0.5) {
            let r0 = g.gen_range(0..h);
            let c0 = g.gen_range(0..w);
            let r1 = (r0 + g.gen_range(2..16)).min(h);
            let c1 = (c0 + g.gen_range(2..16)).min(w);
            (r0..r1)
                .flat_map(|r| (c0..c1).map(move |c| (r, c)))
                .collect()
        } else {
            ellipse_pixels(
                h,
                w,
                g.gen_range(0.0..h as f64),
                g.gen_range(0.0..w as f64),
                g.gen_range(1.5..8.0),
                g.gen_range(1.5..8.0),
                g.gen_range(0.0..3.2),
            )
        };
        for (r, c) in px {
            *labels.get_mut(r, c) = id;
        }
    }
    InstanceMap::new(labels)
}

/// A noisy copy: instances are dropped, shifted by up to 3 px, relabeled with
/// fresh ids, and spurious blobs are added.
pub fn perturb(g: &mut Rng, map: &InstanceMap) -> InstanceMap {
    let (h, w) = map.shape();
    let mut labels = Grid::filled(h, w, 0u32);
    let mut fresh: Vec<u32> = (1..=200).collect();
    fresh.shuffle(g);
    let mut fresh = fresh.into_iter();
    for (_, mask) in map.masks() {
        if g.gen_bool(0.15) {
            continue;
        }
        let dr = g.gen_range(-3i64..=3);
        let dc = g.gen_range(-3i64..=3);
        let id = fresh.next().unwrap();
        for (r, c) in mask.coords() {
            let (rr, cc) = (r as i64 + dr, c as i64 + dc);
            if rr >= 0 && cc >= 0 && rr < h as i64 && cc < w as i64 {
                *labels.get_mut(rr as usize, cc as usize) = id;
            }
        }
    }
    for _ in 0..g.gen_range(0..3) {
        let id = fresh.next().unwrap();
        let r0 = g.gen_range(0..h);
        let c0 = g.gen_range(0..w);
        for r in r0..(r0 + g.gen_range(2..10)).min(h) {
            for c in c0..(c0 + g.gen_range(2..10)).min(w) {
                *labels.get_mut(r, c) = id;
            }
        }
    }
    InstanceMap::new(labels)
}

/// Random single-label types for every instance.
pub fn with_random_types(g: &mut Rng, map: InstanceMap, palette: &[CellType]) -> TypedInstanceMap {
    let labels = map
        .ids()
        .into_iter()
        .map(|id| (id, vec![palette[g.gen_range(0..palette.len())]]))
        .collect();
    TypedInstanceMap::new(map, labels).unwrap()
}

/// Binary PQ of two maps from the explicit-pixel oracle.
pub fn oracle_pq(gt: &InstanceMap, pred: &InstanceMap) -> (f64, f64) {
    let o = brute_force_pq(gt, pred);
    let (tp, fp, fn_) = (o.tp as f64, o.fp as f64, o.fn_ as f64);
    if tp + fp + fn_ == 0.0 {
        return (1.0, 1.0);
    }
    let dq = tp / (tp + 0.5 * fp + 0.5 * fn_);
    let sq = if tp > 0.0 { o.iou_sum / tp } else { 0.0 };
    (dq, dq * sq)
}

/// Pixel partition as a set of pixel sets, independent of ids.
pub fn partition(map: &InstanceMap) -> HashSet<Vec<usize>> {
    let mut by: HashMap<u32, Vec<usize>> = HashMap::new();
    for r in 0..map.height() {
        for c in 0..map.width() {
            let id = map.get(r, c);
            if id != 0 {
                by.entry(id).or_default().push(r * map.width() + c);
            }
        }
    }
    by.into_values().collect()
}
