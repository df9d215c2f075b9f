use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::TileFeature;
use crate::error::{Error, Result};

/// Grouping used when standardizing features. Declaration order is the
/// preference order between otherwise equal scorers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalerMode {
    Global,
    Slide,
    Cohort,
}

impl ScalerMode {
    pub const ALL: [ScalerMode; 3] = [ScalerMode::Global, ScalerMode::Slide, ScalerMode::Cohort];

    pub fn key<'a>(&self, t: &'a TileFeature) -> &'a str {
        match self {
            ScalerMode::Global => "",
            ScalerMode::Slide => &t.slide_id,
            ScalerMode::Cohort => &t.cohort_id,
        }
    }
}

impl fmt::Display for ScalerMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScalerMode::Global => "global",
            ScalerMode::Slide => "slide",
            ScalerMode::Cohort => "cohort",
        })
    }
}

impl FromStr for ScalerMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "global" => Ok(ScalerMode::Global),
            "slide" => Ok(ScalerMode::Slide),
            "cohort" => Ok(ScalerMode::Cohort),
            _ => Err(Error::invalid(format!(
                "unknown scaler {s:?} (expected global, slide or cohort)"
            ))),
        }
    }
}

/// Per-dimension mean and population standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnStats {
    pub mean: Vec<f64>,
    /// `None` for dimensions without spread; those pass through unchanged.
    pub std: Vec<Option<f64>>,
}

impl ColumnStats {
    pub fn fit<'a>(rows: impl IntoIterator<Item = &'a [f64]> + Clone, d: usize) -> Self {
        let mut n = 0usize;
        let mut mean = vec![0.0; d];
        for r in rows.clone() {
            n += 1;
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v;
            }
        }
        let nf = n.max(1) as f64;
        mean.iter_mut().for_each(|m| *m /= nf);
        let mut var = vec![0.0; d];
        for r in rows {
            for ((s, v), m) in var.iter_mut().zip(r).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var
            .iter()
            .zip(&mean)
            .map(|(s, m)| {
                let sd = (s / nf).sqrt();
                (sd > 1e-12 * m.abs().max(1.0)).then_some(sd)
            })
            .collect();
        ColumnStats { mean, std }
    }

    pub fn apply(&self, row: &mut [f64]) {
        for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
            if let Some(s) = s {
                *v = (*v - m) / s;
            }
        }
    }
}

/// Checks a pool and returns its dimension.
pub fn pool_dim(pool: &[TileFeature]) -> Result<usize> {
    let first = pool
        .first()
        .ok_or_else(|| Error::invalid("empty feature pool"))?;
    let d = first.vector.len();
    for t in pool {
        if t.vector.len() != d {
            return Err(Error::shape(format!(
                "tile {} has {} features, expected {d}",
                t.tile_id,
                t.vector.len()
            )));
        }
        if t.vector.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("feature vector"));
        }
    }
    Ok(d)
}

/// Standardized copies of `rows`, each group scaled by its own statistics.
pub fn zscore_rows(rows: &[Vec<f64>], groups: &[&str], d: usize) -> Vec<Vec<f64>> {
    let mut members: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, g) in groups.iter().enumerate() {
        members.entry(*g).or_default().push(i);
    }
    let mut out = rows.to_vec();
    for idx in members.values() {
        let stats = ColumnStats::fit(idx.iter().map(|&i| rows[i].as_slice()), d);
        for &i in idx {
            stats.apply(&mut out[i]);
        }
    }
    out
}

/// Z-scores every dimension within the groups defined by `mode`.
pub fn zscore_conditional(pool: &[TileFeature], mode: ScalerMode) -> Result<Vec<TileFeature>> {
    let d = pool_dim(pool)?;
    let rows: Vec<Vec<f64>> = pool.iter().map(|t| t.vector.clone()).collect();
    let groups: Vec<&str> = pool.iter().map(|t| mode.key(t)).collect();
    let scaled = zscore_rows(&rows, &groups, d);
    Ok(pool
        .iter()
        .zip(scaled)
        .map(|(t, vector)| TileFeature {
            vector,
            ..t.clone()
        })
        .collect())
}
