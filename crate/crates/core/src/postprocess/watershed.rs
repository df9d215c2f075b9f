use std::cmp::Reverse;
use std::collections::{BinaryHeap, VecDeque};

use crate::domain::Grid;

/// 4-connected components of `mask`, labeled `1..` in row-major discovery
/// order. Components smaller than `min_area` are discarded.
pub fn connected_components(mask: &Grid<bool>, min_area: usize) -> (Grid<u32>, u32) {
    let (h, w) = mask.shape();
    let m = mask.as_slice();
    let mut labels = Grid::filled(h, w, 0u32);
    let mut seen = vec![false; m.len()];
    let mut queue = VecDeque::new();
    let mut members = Vec::new();
    let mut next = 0u32;
    for start in 0..m.len() {
        if !m[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        queue.push_back(start);
        members.clear();
        while let Some(p) = queue.pop_front() {
            members.push(p);
            for q in neighbours(p, h, w).into_iter().flatten() {
                if m[q] && !seen[q] {
                    seen[q] = true;
                    queue.push_back(q);
                }
            }
        }
        if members.len() >= min_area.max(1) {
            next += 1;
            let l = labels.as_mut_slice();
            for &p in &members {
                l[p] = next;
            }
        }
    }
    (labels, next)
}

/// Up, left, right, down.
#[inline]
fn neighbours(p: usize, h: usize, w: usize) -> [Option<usize>; 4] {
    let (r, c) = (p / w, p % w);
    [
        (r > 0).then(|| p - w),
        (c > 0).then(|| p - 1),
        (c + 1 < w).then(|| p + 1),
        (r + 1 < h).then(|| p + w),
    ]
}

/// Marker-controlled priority flood.
///
/// Grows `markers` over pixels of `domain` in order of increasing
/// `elevation`; equal elevations are processed first-in first-out, and seeds
/// enter the queue in row-major order, so the result is fully determined by
/// the inputs. Domain pixels unreachable from any marker stay 0.
pub fn flood(elevation: &Grid<f32>, markers: &Grid<u32>, domain: &Grid<bool>) -> Grid<u32> {
    let (h, w) = elevation.shape();
    let elev = elevation.as_slice();
    let dom = domain.as_slice();
    let mut labels = markers.clone();
    let lab = labels.as_mut_slice();
    let mut heap = BinaryHeap::new();
    let mut seq: u64 = 0;
    // Elevations are non-negative, so their bit patterns order like the values.
    let key = |p: usize| elev[p].max(0.0).to_bits();
    for (p, &l) in lab.iter().enumerate() {
        if l != 0 {
            heap.push(Reverse((key(p), seq, p as u32)));
            seq += 1;
        }
    }
    while let Some(Reverse((_, _, p))) = heap.pop() {
        let p = p as usize;
        let l = lab[p];
        for q in neighbours(p, h, w).into_iter().flatten() {
            if dom[q] && lab[q] == 0 {
                lab[q] = l;
                heap.push(Reverse((key(q), seq, q as u32)));
                seq += 1;
            }
        }
    }
    labels
}
