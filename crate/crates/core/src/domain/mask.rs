use crate::error::{Error, Result};

/// Binary pixel mask stored as sorted row-major linear indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    height: usize,
    width: usize,
    pixels: Vec<u32>,
}

impl Mask {
    pub fn empty(height: usize, width: usize) -> Self {
        Mask {
            height,
            width,
            pixels: Vec::new(),
        }
    }

    /// Builds a mask from arbitrary linear indices; duplicates are removed.
    pub fn from_indices(height: usize, width: usize, mut pixels: Vec<u32>) -> Result<Self> {
        let n = height * width;
        if let Some(&bad) = pixels.iter().find(|&&p| p as usize >= n) {
            return Err(Error::shape(format!(
                "pixel index {bad} outside a {height}x{width} mask"
            )));
        }
        pixels.sort_unstable();
        pixels.dedup();
        Ok(Mask {
            height,
            width,
            pixels,
        })
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        mut inside: impl FnMut(usize, usize) -> bool,
    ) -> Self {
        let mut pixels = Vec::new();
        for r in 0..height {
            for c in 0..width {
                if inside(r, c) {
                    pixels.push((r * width + c) as u32);
                }
            }
        }
        Mask {
            height,
            width,
            pixels,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn area(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    pub fn indices(&self) -> &[u32] {
        &self.pixels
    }

    pub fn contains(&self, row: usize, col: usize) -> bool {
        row < self.height
            && col < self.width
            && self
                .pixels
                .binary_search(&((row * self.width + col) as u32))
                .is_ok()
    }

    /// `(row, col)` of every member pixel in row-major order.
    pub fn coords(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let w = self.width;
        self.pixels
            .iter()
            .map(move |&p| (p as usize / w, p as usize % w))
    }

    pub fn intersection_area(&self, other: &Mask) -> usize {
        let (mut i, mut j, mut n) = (0, 0, 0);
        let (a, b) = (&self.pixels, &other.pixels);
        while i < a.len() && j < b.len() {
            match a[i].cmp(&b[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    n += 1;
                    i += 1;
                    j += 1;
                }
            }
        }
        n
    }

    pub fn iou(&self, other: &Mask) -> f64 {
        let inter = self.intersection_area(other);
        let union = self.area() + other.area() - inter;
        if union == 0 {
            0.0
        } else {
            inter as f64 / union as f64
        }
    }
}

/// Mean `(row, col)` of the member pixels, in pixel-index units.
///
/// A pixel `(r, c)` covers `[r, r+1) x [c, c+1)`; add 0.5 to convert the result
/// to the continuous frame used by annotation points.
pub fn centroid(mask: &Mask) -> Result<(f64, f64)> {
    if mask.is_empty() {
        return Err(Error::invalid("centroid of an empty mask"));
    }
    let (mut sr, mut sc) = (0.0, 0.0);
    for (r, c) in mask.coords() {
        sr += r as f64;
        sc += c as f64;
    }
    let n = mask.area() as f64;
    Ok((sr / n, sc / n))
}

/// Even-odd rasterization of a polygon given as `(x, y)` = `(col, row)` vertices.
///
/// A pixel is set iff its center `(r + 0.5, c + 0.5)` lies inside. Pixels
/// outside the `height x width` frame are clipped.
pub fn rasterize(polygon: &[(f64, f64)], height: usize, width: usize) -> Result<Mask> {
    if polygon.len() < 3 {
        return Err(Error::invalid(format!(
            "polygon needs at least 3 vertices, got {}",
            polygon.len()
        )));
    }
    if polygon
        .iter()
        .any(|(x, y)| !x.is_finite() || !y.is_finite())
    {
        return Err(Error::NonFinite("polygon"));
    }
    // Orient every edge canonically so the vertex order cannot change rounding.
    let edges: Vec<((f64, f64), (f64, f64))> = (0..polygon.len())
        .map(|i| {
            let a = polygon[i];
            let b = polygon[(i + 1) % polygon.len()];
            if (a.1, a.0) <= (b.1, b.0) {
                (a, b)
            } else {
                (b, a)
            }
        })
        .filter(|(a, b)| a.1 != b.1)
        .collect();

    let mut pixels = Vec::new();
    let mut crossings: Vec<f64> = Vec::new();
    for r in 0..height {
        let y = r as f64 + 0.5;
        crossings.clear();
        for &((x0, y0), (x1, y1)) in &edges {
            if y0 <= y && y < y1 {
                crossings.push(x0 + (y - y0) * (x1 - x0) / (y1 - y0));
            }
        }
        if crossings.is_empty() {
            continue;
        }
        crossings.sort_by(f64::total_cmp);
        for span in crossings.chunks_exact(2) {
            // Centers c + 0.5 with span[0] < c + 0.5 < span[1] are inside.
            let lo = (span[0] - 0.5).floor() + 1.0;
            let hi = (span[1] - 0.5).ceil() - 1.0;
            let lo = lo.max(0.0);
            let hi = hi.min(width as f64 - 1.0);
            if lo > hi {
                continue;
            }
            for c in lo as usize..=hi as usize {
                pixels.push((r * width + c) as u32);
            }
        }
    }
    Mask::from_indices(height, width, pixels)
}
