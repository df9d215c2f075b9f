//! From network output maps to typed nucleus instances.
//!
//! The pipeline follows the two-stage HoVerNet procedure: boundary energy
//! from the gradients of the horizontal/vertical distance maps, marker
//! extraction in low-energy foreground, marker-controlled watershed over the
//! foreground, then a per-instance class vote on the type map.

mod sobel;
mod synth;
mod vote;
mod watershed;

use serde::{Deserialize, Serialize};

pub use sobel::sobel_energy;
pub use synth::synthesize_hv;
pub use vote::{assign_types, VoteMode};
pub use watershed::{connected_components, flood};

use crate::domain::{canonicalize, Grid, InstanceMap, ModelOutput, TypedInstanceMap};
use crate::error::{Error, Result};

/// Thresholds of the instance extraction. Defaults are for 40x tiles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PostprocessParams {
    pub fg_threshold: f32,
    pub grad_threshold: f32,
    pub min_instance_area: usize,
    #[serde(default)]
    pub vote: VoteMode,
}

impl Default for PostprocessParams {
    fn default() -> Self {
        PostprocessParams {
            fg_threshold: 0.5,
            grad_threshold: 0.4,
            min_instance_area: 10,
            vote: VoteMode::ProbabilitySum,
        }
    }
}

impl PostprocessParams {
    pub fn validate(&self) -> Result<()> {
        let open_unit = |x: f32| x > 0.0 && x < 1.0;
        if !open_unit(self.fg_threshold) {
            return Err(Error::invalid(format!(
                "fg_threshold {} not in (0, 1)",
                self.fg_threshold
            )));
        }
        if !open_unit(self.grad_threshold) {
            return Err(Error::invalid(format!(
                "grad_threshold {} not in (0, 1)",
                self.grad_threshold
            )));
        }
        Ok(())
    }
}

/// Instance map from the foreground and distance maps.
pub fn extract_instances(out: &ModelOutput, params: &PostprocessParams) -> Result<InstanceMap> {
    params.validate()?;
    let (h, w) = out.shape();
    let fg: Grid<bool> = out.np().map(|&p| p >= params.fg_threshold);
    let energy = sobel_energy(out.h(), out.v())?;

    let seeds = Grid::from_vec(
        h,
        w,
        fg.as_slice()
            .iter()
            .zip(energy.as_slice())
            .map(|(&f, &e)| f && e <= params.grad_threshold)
            .collect(),
    )?;
    let (markers, _) = connected_components(&seeds, params.min_instance_area);
    let mut labels = flood(&energy, &markers, &fg);
    drop_small(&mut labels, params.min_instance_area);
    Ok(canonicalize(&InstanceMap::new(labels)))
}

fn drop_small(labels: &mut Grid<u32>, min_area: usize) {
    if min_area <= 1 {
        return;
    }
    let mut area: std::collections::HashMap<u32, usize> = Default::default();
    for &l in labels.as_slice() {
        if l != 0 {
            *area.entry(l).or_default() += 1;
        }
    }
    for l in labels.as_mut_slice() {
        if *l != 0 && area[l] < min_area {
            *l = 0;
        }
    }
}

/// Instance extraction followed by the class vote.
pub fn postprocess(out: &ModelOutput, params: &PostprocessParams) -> Result<TypedInstanceMap> {
    let map = extract_instances(out, params)?;
    assign_types(&map, out.nt(), params.vote)
}
