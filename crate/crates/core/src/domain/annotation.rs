use serde::{Deserialize, Serialize};

use super::CellType;
use crate::error::{Error, Result};

/// One rater's nucleus annotation: a point in the continuous pixel frame
/// (`x` = column axis, `y` = row axis), its type votes and an optional contour.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatedNucleus {
    pub x: f64,
    pub y: f64,
    pub types: Vec<CellType>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contour: Option<Vec<(f64, f64)>>,
}

impl AnnotatedNucleus {
    pub fn point(x: f64, y: f64, t: CellType) -> Self {
        AnnotatedNucleus {
            x,
            y,
            types: vec![t],
            contour: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationSet {
    pub rater_id: String,
    pub tile_id: String,
    pub width: usize,
    pub height: usize,
    pub magnification: u32,
    pub nuclei: Vec<AnnotatedNucleus>,
}

impl AnnotationSet {
    pub fn validate(&self) -> Result<()> {
        if ![20, 40].contains(&self.magnification) {
            return Err(Error::invalid(format!(
                "magnification must be 20 or 40, got {}",
                self.magnification
            )));
        }
        for (i, n) in self.nuclei.iter().enumerate() {
            let inside = |x: f64, hi: usize| x.is_finite() && x >= 0.0 && x < hi as f64;
            if !inside(n.x, self.width) || !inside(n.y, self.height) {
                return Err(Error::invalid(format!(
                    "nuclei[{i}]: point ({}, {}) outside the {}x{} tile",
                    n.x, n.y, self.width, self.height
                )));
            }
            if n.types.is_empty() {
                return Err(Error::invalid(format!("nuclei[{i}]: empty type list")));
            }
            if let Some(poly) = &n.contour {
                validate_polygon(poly).map_err(|e| Error::invalid(format!("nuclei[{i}]: {e}")))?;
                let within = poly.iter().all(|&(x, y)| {
                    x.is_finite()
                        && y.is_finite()
                        && (0.0..=self.width as f64).contains(&x)
                        && (0.0..=self.height as f64).contains(&y)
                });
                if !within {
                    return Err(Error::invalid(format!(
                        "nuclei[{i}]: contour leaves the {}x{} tile",
                        self.width, self.height
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Accepts simple polygons with at least three vertices.
pub fn validate_polygon(poly: &[(f64, f64)]) -> Result<()> {
    let n = poly.len();
    if n < 3 {
        return Err(Error::invalid(format!(
            "contour has {n} vertices, need at least 3"
        )));
    }
    let seg = |i: usize| (poly[i], poly[(i + 1) % n]);
    for i in 0..n {
        let (a, b) = seg(i);
        if a == b {
            return Err(Error::invalid(format!("contour repeats vertex {i}")));
        }
        for j in i + 1..n {
            let (c, d) = seg(j);
            let adjacent = j == i + 1 || (i == 0 && j == n - 1);
            if adjacent {
                // Neighbouring edges may only share their common vertex.
                let folded = if j == i + 1 {
                    folds_back(b, a, d)
                } else {
                    folds_back(a, b, c)
                };
                if folded {
                    return Err(Error::invalid(format!(
                        "contour folds back at edges {i} and {j}"
                    )));
                }
            } else if segments_intersect(a, b, c, d) {
                return Err(Error::invalid(format!(
                    "contour self-intersects at edges {i} and {j}"
                )));
            }
        }
    }
    Ok(())
}

type P = (f64, f64);

fn orient(a: P, b: P, c: P) -> f64 {
    (b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0)
}

fn on_segment(a: P, b: P, p: P) -> bool {
    p.0 >= a.0.min(b.0) && p.0 <= a.0.max(b.0) && p.1 >= a.1.min(b.1) && p.1 <= a.1.max(b.1)
}

fn segments_intersect(a: P, b: P, c: P, d: P) -> bool {
    let (o1, o2, o3, o4) = (
        orient(a, b, c),
        orient(a, b, d),
        orient(c, d, a),
        orient(c, d, b),
    );
    if ((o1 > 0.0 && o2 < 0.0) || (o1 < 0.0 && o2 > 0.0))
        && ((o3 > 0.0 && o4 < 0.0) || (o3 < 0.0 && o4 > 0.0))
    {
        return true;
    }
    (o1 == 0.0 && on_segment(a, b, c))
        || (o2 == 0.0 && on_segment(a, b, d))
        || (o3 == 0.0 && on_segment(c, d, a))
        || (o4 == 0.0 && on_segment(c, d, b))
}

/// Adjacent edges `shared -> p` and `shared -> q` overlap when collinear and
/// pointing the same way.
fn folds_back(shared: P, p: P, q: P) -> bool {
    orient(shared, p, q) == 0.0
        && (p.0 - shared.0) * (q.0 - shared.0) + (p.1 - shared.1) * (q.1 - shared.1) > 0.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polygon_checks() {
        let sq = [(0.0, 0.0), (4.0, 0.0), (4.0, 4.0), (0.0, 4.0)];
        assert!(validate_polygon(&sq).is_ok());
        let bowtie = [(0.0, 0.0), (4.0, 4.0), (4.0, 0.0), (0.0, 4.0)];
        assert!(validate_polygon(&bowtie).is_err());
        assert!(validate_polygon(&sq[..2]).is_err());
        let spike = [(0.0, 0.0), (4.0, 0.0), (2.0, 0.0), (2.0, 3.0)];
        assert!(validate_polygon(&spike).is_err());
        let straight = [(0.0, 0.0), (2.0, 0.0), (4.0, 0.0), (2.0, 3.0)];
        assert!(validate_polygon(&straight).is_ok());
    }

    #[test]
    fn rejects_out_of_bounds_points() {
        let mut set = AnnotationSet {
            rater_id: "a".into(),
            tile_id: "t".into(),
            width: 10,
            height: 10,
            magnification: 40,
            nuclei: vec![AnnotatedNucleus::point(3.0, 4.0, CellType::Lymphocyte)],
        };
        assert!(set.validate().is_ok());
        set.nuclei
            .push(AnnotatedNucleus::point(10.0, 4.0, CellType::Lymphocyte));
        assert!(set.validate().is_err());
    }
}
