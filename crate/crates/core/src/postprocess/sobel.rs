use crate::domain::Grid;
use crate::error::{Error, Result};

/// Mirror index without repeating the edge sample (`-1 -> 1`, `n -> n - 2`).
#[inline]
fn reflect(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let n = n as isize;
    let i = if i < 0 { -i } else { i };
    let i = if i >= n { 2 * (n - 1) - i } else { i };
    i as usize
}

/// 3x3 Sobel response along columns (`along_cols`) or rows.
fn sobel(g: &Grid<f32>, along_cols: bool) -> Grid<f32> {
    let (h, w) = g.shape();
    let src = g.as_slice();
    let mut out = Grid::filled(h, w, 0.0f32);
    let dst = out.as_mut_slice();
    for r in 0..h {
        let rm = reflect(r as isize - 1, h);
        let rp = reflect(r as isize + 1, h);
        for c in 0..w {
            let cm = reflect(c as isize - 1, w);
            let cp = reflect(c as isize + 1, w);
            let at = |rr: usize, cc: usize| src[rr * w + cc];
            let v = if along_cols {
                (at(rm, cp) - at(rm, cm))
                    + 2.0 * (at(r, cp) - at(r, cm))
                    + (at(rp, cp) - at(rp, cm))
            } else {
                (at(rp, cm) - at(rm, cm))
                    + 2.0 * (at(rp, c) - at(rm, c))
                    + (at(rp, cp) - at(rm, cp))
            };
            dst[r * w + c] = v.abs();
        }
    }
    out
}

/// Affine min-max rescale to `[0, 1]`; a constant grid becomes all zeros.
fn normalize(g: &mut Grid<f32>) {
    let (lo, hi) = g
        .as_slice()
        .iter()
        .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &x| {
            (lo.min(x), hi.max(x))
        });
    let span = hi - lo;
    for x in g.as_mut_slice() {
        *x = if span > 0.0 { (*x - lo) / span } else { 0.0 };
    }
}

/// Boundary energy of a horizontal/vertical distance map pair.
///
/// Each map is differentiated along its own axis with a reflect-padded 3x3
/// Sobel kernel; response magnitudes are min-max normalized per map and the
/// energy is their pixel-wise maximum. Nucleus interiors, where the maps
/// change slowly, sit near 0; nucleus borders and the seams between touching
/// nuclei sit near 1.
pub fn sobel_energy(h: &Grid<f32>, v: &Grid<f32>) -> Result<Grid<f32>> {
    if h.shape() != v.shape() {
        return Err(Error::shape(format!(
            "h map is {:?} but v map is {:?}",
            h.shape(),
            v.shape()
        )));
    }
    if h.as_slice()
        .iter()
        .chain(v.as_slice())
        .any(|x| !x.is_finite())
    {
        return Err(Error::NonFinite("hv map"));
    }
    let mut gx = sobel(h, true);
    let mut gy = sobel(v, false);
    normalize(&mut gx);
    normalize(&mut gy);
    for (a, &b) in gx.as_mut_slice().iter_mut().zip(gy.as_slice()) {
        *a = a.max(b);
    }
    Ok(gx)
}
