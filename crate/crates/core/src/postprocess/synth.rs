use crate::domain::{CellType, Grid, ModelOutput, TypedInstanceMap};

/// Ideal network output for a ground-truth map.
///
/// Foreground is 1 on instance pixels. Within each instance the horizontal
/// map is `(col - centroid_col) / max |col - centroid_col|` and the vertical
/// map is the row analogue, both 0 when the instance spans a single column
/// (row). The class map is one-hot on each instance's first label, background
/// elsewhere; a 15th channel is added only if some instance is `Unknown`.
pub fn synthesize_hv(gt: &TypedInstanceMap) -> ModelOutput {
    let (height, width) = gt.shape();
    let labels = gt.map().labels().as_slice();
    let n = height * width;

    let mut extent: std::collections::HashMap<u32, (f64, f64)> = Default::default();
    for (p, &id) in labels.iter().enumerate() {
        if id == 0 {
            continue;
        }
        let rec = gt.record(id).expect("typed map covers every id");
        let (cr, cc) = rec.centroid;
        let e = extent.entry(id).or_insert((0.0, 0.0));
        e.0 = e.0.max(((p / width) as f64 - cr).abs());
        e.1 = e.1.max(((p % width) as f64 - cc).abs());
    }

    let channels = if gt
        .instances()
        .iter()
        .any(|r| r.labels[0] == CellType::Unknown)
    {
        CellType::COUNT + 1
    } else {
        CellType::COUNT
    };
    let mut np = vec![0.0f32; n];
    let mut h = vec![0.0f32; n];
    let mut v = vec![0.0f32; n];
    let mut nt = vec![vec![0.0f32; n]; channels];
    for (p, &id) in labels.iter().enumerate() {
        if id == 0 {
            nt[0][p] = 1.0;
            continue;
        }
        let rec = gt.record(id).expect("typed map covers every id");
        let (cr, cc) = rec.centroid;
        let (er, ec) = extent[&id];
        np[p] = 1.0;
        if ec > 0.0 {
            h[p] = (((p % width) as f64 - cc) / ec) as f32;
        }
        if er > 0.0 {
            v[p] = (((p / width) as f64 - cr) / er) as f32;
        }
        nt[rec.primary().channel()][p] = 1.0;
    }
    let grid = |d: Vec<f32>| Grid::from_vec(height, width, d).expect("sized above");
    ModelOutput::new(
        grid(np),
        grid(h),
        grid(v),
        nt.into_iter().map(grid).collect(),
    )
    .expect("synthesized maps satisfy the output invariants")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::InstanceMap;

    #[test]
    fn bar_gets_linear_ramp() {
        let map = InstanceMap::from_vec(3, 7, {
            let mut l = vec![0; 21];
            l[8..13].fill(1);
            l
        })
        .unwrap();
        let gt = TypedInstanceMap::uniform(map, CellType::Macrophage);
        let out = synthesize_hv(&gt);
        assert_eq!(&out.h().as_slice()[8..13], &[-1.0, -0.5, 0.0, 0.5, 1.0]);
        assert!(out.v().as_slice().iter().all(|&x| x == 0.0));
        assert_eq!(out.nt()[CellType::Macrophage.channel()].as_slice()[10], 1.0);
        assert_eq!(out.nt()[0].as_slice()[0], 1.0);
    }

    #[test]
    fn single_pixel_is_flat() {
        let mut l = vec![0; 9];
        l[4] = 3;
        let gt = TypedInstanceMap::uniform(
            InstanceMap::from_vec(3, 3, l).unwrap(),
            CellType::Neutrophil,
        );
        let out = synthesize_hv(&gt);
        assert_eq!(out.h().as_slice()[4], 0.0);
        assert_eq!(out.v().as_slice()[4], 0.0);
        assert_eq!(out.np().as_slice()[4], 1.0);
    }

    #[test]
    fn empty_ground_truth() {
        let out = synthesize_hv(&TypedInstanceMap::empty(5, 6));
        assert!(out.np().as_slice().iter().all(|&x| x == 0.0));
        assert!(out.nt()[0].as_slice().iter().all(|&x| x == 1.0));
        assert_eq!(out.channels(), 14);
    }
}
