use super::{CellType, Grid};
use crate::error::{Error, Result};

/// Raw output maps of a segmentation network for one tile.
///
/// `nt` holds one probability plane per class channel; channel 0 is
/// background and channel `c >= 1` is the [`CellType`] with code `c - 1`. The
/// usual layout has 14 channels (background plus the 13 phenotypes); a 15th
/// channel carries `Unknown` when the network predicts it.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelOutput {
    np: Grid<f32>,
    h: Grid<f32>,
    v: Grid<f32>,
    nt: Vec<Grid<f32>>,
}

impl ModelOutput {
    pub const MIN_CHANNELS: usize = 2;
    pub const MAX_CHANNELS: usize = CellType::COUNT + 1;
    pub const SUM_TOLERANCE: f32 = 1e-4;

    pub fn new(np: Grid<f32>, h: Grid<f32>, v: Grid<f32>, nt: Vec<Grid<f32>>) -> Result<Self> {
        let shape = np.shape();
        if h.shape() != shape || v.shape() != shape {
            return Err(Error::shape(format!(
                "np map is {:?} but hv maps are {:?} and {:?}",
                shape,
                h.shape(),
                v.shape()
            )));
        }
        if let Some(bad) = nt.iter().find(|g| g.shape() != shape) {
            return Err(Error::shape(format!(
                "np map is {:?} but an nt channel is {:?}",
                shape,
                bad.shape()
            )));
        }
        if !(Self::MIN_CHANNELS..=Self::MAX_CHANNELS).contains(&nt.len()) {
            return Err(Error::shape(format!(
                "nt map has {} channels, expected {}..={}",
                nt.len(),
                Self::MIN_CHANNELS,
                Self::MAX_CHANNELS
            )));
        }
        check_range(&np, 0.0, 1.0, "np map")?;
        check_range(&h, -1.0, 1.0, "h map")?;
        check_range(&v, -1.0, 1.0, "v map")?;
        for g in &nt {
            check_range(g, 0.0, 1.0, "nt map")?;
        }
        for i in 0..np.len() {
            let s: f32 = nt.iter().map(|g| g.as_slice()[i]).sum();
            if (s - 1.0).abs() > Self::SUM_TOLERANCE {
                let w = shape.1;
                return Err(Error::invalid(format!(
                    "nt probabilities sum to {s} at pixel ({}, {})",
                    i / w,
                    i % w
                )));
            }
        }
        Ok(ModelOutput { np, h, v, nt })
    }

    pub fn shape(&self) -> (usize, usize) {
        self.np.shape()
    }

    pub fn np(&self) -> &Grid<f32> {
        &self.np
    }

    pub fn h(&self) -> &Grid<f32> {
        &self.h
    }

    pub fn v(&self) -> &Grid<f32> {
        &self.v
    }

    pub fn nt(&self) -> &[Grid<f32>] {
        &self.nt
    }

    pub fn channels(&self) -> usize {
        self.nt.len()
    }
}

fn check_range(g: &Grid<f32>, lo: f32, hi: f32, what: &'static str) -> Result<()> {
    for &x in g.as_slice() {
        if !x.is_finite() {
            return Err(Error::NonFinite(what));
        }
        if x < lo || x > hi {
            return Err(Error::invalid(format!(
                "{what} value {x} outside [{lo}, {hi}]"
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plane(v: f32) -> Grid<f32> {
        Grid::filled(4, 4, v)
    }

    #[test]
    fn validates_shapes_and_sums() {
        let ok = ModelOutput::new(
            plane(0.2),
            plane(0.0),
            plane(0.0),
            vec![plane(0.5), plane(0.5)],
        );
        assert!(ok.is_ok());
        let bad_sum = ModelOutput::new(
            plane(0.2),
            plane(0.0),
            plane(0.0),
            vec![plane(0.5), plane(0.2)],
        );
        assert!(bad_sum.is_err());
        let bad_shape = ModelOutput::new(
            plane(0.2),
            Grid::filled(3, 4, 0.0),
            plane(0.0),
            vec![plane(0.5), plane(0.5)],
        );
        assert!(matches!(bad_shape, Err(Error::ShapeMismatch(_))));
        let nan = ModelOutput::new(
            plane(f32::NAN),
            plane(0.0),
            plane(0.0),
            vec![plane(1.0), plane(0.0)],
        );
        assert!(matches!(nan, Err(Error::NonFinite(_))));
    }
}
