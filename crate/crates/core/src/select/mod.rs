//! Active-learning tile selection.

mod kmeans;
mod scaling;
mod scorer;
mod uncertainty;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

pub use kmeans::{kmeans, kmeans_with, KMeans};
pub use scaling::{pool_dim, zscore_conditional, zscore_rows, ColumnStats, ScalerMode};
pub use scorer::{
    balanced_accuracy, cohort_folds, fit_presence_scorer, fit_with, select_best_scorer,
    select_best_scorer_with, BestScorer, CandidateSpec, CvResult, PresenceScorer, TrainParams,
};
pub use uncertainty::{binary_entropy, ensemble_uncertainty, UncertaintyScores};

use crate::domain::CellType;
use crate::error::{Error, Result};
use crate::metrics::percentile;
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TileFeature {
    pub tile_id: String,
    pub slide_id: String,
    pub cohort_id: String,
    pub vector: Vec<f64>,
    /// Slide-level `(x, y)` in pixels.
    pub coords: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionConfig {
    /// Clusters per slide for the diversity pool.
    pub k_diversity: usize,
    pub top_per_slide_per_type: usize,
    pub prob_floor: f64,
    pub bald_percentile: f64,
    pub uncertainty_k_range: (usize, usize),
    pub n_per_indication: usize,
    pub weight_clip: (f64, f64),
    pub seed: u64,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        SelectionConfig {
            k_diversity: 20,
            top_per_slide_per_type: 2,
            prob_floor: 0.4,
            bald_percentile: 90.0,
            uncertainty_k_range: (5, 20),
            n_per_indication: 50,
            weight_clip: (0.5, 2.0),
            seed: crate::DEFAULT_SEED,
        }
    }
}

impl SelectionConfig {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.weight_clip;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return Err(Error::invalid(format!(
                "weight clip [{lo}, {hi}] must satisfy 0 < lo <= hi"
            )));
        }
        if !(self.bald_percentile > 0.0 && self.bald_percentile < 100.0) {
            return Err(Error::invalid(format!(
                "percentile {} not in (0, 100)",
                self.bald_percentile
            )));
        }
        let (a, b) = self.uncertainty_k_range;
        if a == 0 || a > b {
            return Err(Error::invalid(format!("cluster range [{a}, {b}] invalid")));
        }
        if self.k_diversity == 0 {
            return Err(Error::invalid("k_diversity must be positive"));
        }
        if !(0.0..1.0).contains(&self.prob_floor) {
            return Err(Error::invalid(format!(
                "probability floor {} not in [0, 1)",
                self.prob_floor
            )));
        }
        Ok(())
    }
}

/// Why a tile entered a pool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Origin {
    Diversity { cluster: usize },
    Rare { cell_type: CellType, score: f64 },
    Uncertainty { cluster: usize, bald: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    /// Row in the feature pool.
    pub index: usize,
    pub tile_id: String,
    pub slide_id: String,
    pub cohort_id: String,
    pub origin: Origin,
}

impl Candidate {
    fn new(index: usize, t: &TileFeature, origin: Origin) -> Self {
        Candidate {
            index,
            tile_id: t.tile_id.clone(),
            slide_id: t.slide_id.clone(),
            cohort_id: t.cohort_id.clone(),
            origin,
        }
    }
}

/// Presence probability per cell type of one tile.
pub type TypeScores = BTreeMap<CellType, f64>;

/// Pool rows per slide, each sorted by tile id.
fn by_slide(pool: &[TileFeature], rows: impl Iterator<Item = usize>) -> BTreeMap<&str, Vec<usize>> {
    let mut m: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for i in rows {
        m.entry(pool[i].slide_id.as_str()).or_default().push(i);
    }
    for v in m.values_mut() {
        v.sort_by(|&a, &b| pool[a].tile_id.cmp(&pool[b].tile_id).then(a.cmp(&b)));
    }
    m
}

/// k-means on the given rows and one uniform draw per cluster.
fn one_per_cluster(
    pool: &[TileFeature],
    rows: &[usize],
    k: usize,
    seed: u64,
    slot: u64,
) -> Result<Vec<(usize, usize)>> {
    let pts: Vec<Vec<f64>> = rows.iter().map(|&i| pool[i].vector.clone()).collect();
    let km = kmeans_with(&pts, k, &mut rng::stream(seed, 2 * slot))?;
    let mut members = vec![Vec::new(); k];
    for (pos, &c) in km.assignments.iter().enumerate() {
        members[c].push(rows[pos]);
    }
    let mut g = rng::stream(seed, 2 * slot + 1);
    Ok(members
        .into_iter()
        .enumerate()
        .filter(|(_, m)| !m.is_empty())
        .map(|(c, m)| (c, m[rng::index(&mut g, m.len())]))
        .collect())
}

/// One random tile from each of `min(k_diversity, n)` k-means clusters per
/// slide.
pub fn diversity_pool(pool: &[TileFeature], cfg: &SelectionConfig) -> Result<Vec<Candidate>> {
    cfg.validate()?;
    pool_dim(pool)?;
    let mut out = Vec::new();
    for (slot, rows) in by_slide(pool, 0..pool.len()).values().enumerate() {
        let k = cfg.k_diversity.min(rows.len());
        for (cluster, i) in one_per_cluster(pool, rows, k, cfg.seed, slot as u64)? {
            out.push(Candidate::new(i, &pool[i], Origin::Diversity { cluster }));
        }
    }
    Ok(out)
}

/// Top-scored tiles per slide and cell type, deduplicated by tile id.
///
/// `scores[i]` holds the presence probabilities of pool row `i`.
pub fn enrich_rare(
    pool: &[TileFeature],
    scores: &[TypeScores],
    cfg: &SelectionConfig,
) -> Result<Vec<Candidate>> {
    if scores.len() != pool.len() {
        return Err(Error::shape(format!(
            "{} score rows for {} tiles",
            scores.len(),
            pool.len()
        )));
    }
    let types: BTreeSet<CellType> = scores.iter().flat_map(|s| s.keys().copied()).collect();
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for rows in by_slide(pool, 0..pool.len()).values() {
        for &t in &types {
            let mut scored: Vec<(f64, usize)> = rows
                .iter()
                .filter_map(|&i| scores[i].get(&t).map(|&s| (s, i)))
                .collect();
            // Rows are already in tile-id order, so a stable sort breaks ties by id.
            scored.sort_by(|a, b| b.0.total_cmp(&a.0));
            for &(score, i) in scored.iter().take(cfg.top_per_slide_per_type) {
                if seen.insert(pool[i].tile_id.as_str()) {
                    out.push(Candidate::new(
                        i,
                        &pool[i],
                        Origin::Rare {
                            cell_type: t,
                            score,
                        },
                    ));
                }
            }
        }
    }
    Ok(out)
}

/// Concatenation without repeated tile ids; earlier pools win.
pub fn merge_pools(pools: &[&[Candidate]]) -> Vec<Candidate> {
    let mut seen = BTreeSet::new();
    pools
        .iter()
        .flat_map(|p| p.iter())
        .filter(|c| seen.insert(c.tile_id.clone()))
        .cloned()
        .collect()
}

/// High-BALD tiles per slide among confident-enough tiles, thinned to one per
/// k-means cluster.
pub fn uncertainty_pool(
    pool: &[TileFeature],
    scores: &[UncertaintyScores],
    cfg: &SelectionConfig,
) -> Result<Vec<Candidate>> {
    cfg.validate()?;
    if scores.len() != pool.len() {
        return Err(Error::shape(format!(
            "{} uncertainty rows for {} tiles",
            scores.len(),
            pool.len()
        )));
    }
    if pool.is_empty() {
        return Ok(Vec::new());
    }
    pool_dim(pool)?;
    let kept = (0..pool.len()).filter(|&i| scores[i].mean_prob > cfg.prob_floor);
    let (kmin, kmax) = cfg.uncertainty_k_range;
    let mut out = Vec::new();
    for (slot, rows) in by_slide(pool, kept).values().enumerate() {
        let mut bald: Vec<f64> = rows.iter().map(|&i| scores[i].bald).collect();
        bald.sort_by(f64::total_cmp);
        let cut = percentile(&bald, cfg.bald_percentile / 100.0);
        let high: Vec<usize> = rows
            .iter()
            .copied()
            .filter(|&i| scores[i].bald > cut)
            .collect();
        if high.is_empty() {
            continue;
        }
        let k = high.len().clamp(kmin, kmax).min(high.len());
        for (cluster, i) in one_per_cluster(pool, &high, k, cfg.seed, slot as u64)? {
            out.push(Candidate::new(
                i,
                &pool[i],
                Origin::Uncertainty {
                    cluster,
                    bald: scores[i].bald,
                },
            ));
        }
    }
    Ok(out)
}

/// Per cohort and slide: `clamp(c_s / mean(c), lo, hi)` where `c_s` counts the
/// slide's tiles in `pool`.
pub fn slide_weights(
    pool: &[Candidate],
    clip: (f64, f64),
) -> BTreeMap<String, BTreeMap<String, f64>> {
    let mut counts: BTreeMap<&str, BTreeMap<&str, usize>> = BTreeMap::new();
    for c in pool {
        *counts
            .entry(&c.cohort_id)
            .or_default()
            .entry(&c.slide_id)
            .or_default() += 1;
    }
    counts
        .into_iter()
        .map(|(cohort, slides)| {
            let mean = slides.values().sum::<usize>() as f64 / slides.len() as f64;
            let w = slides
                .into_iter()
                .map(|(s, c)| (s.to_string(), (c as f64 / mean).clamp(clip.0, clip.1)))
                .collect();
            (cohort.to_string(), w)
        })
        .collect()
}

/// Stream of the final draw, apart from the per-slide clustering streams.
const SAMPLING_STREAM: u64 = u64::MAX;

/// Draws `n_per_indication` tiles per cohort without replacement, each tile
/// weighted by its slide's clipped weight. Cohorts are visited in sorted order
/// from one generator.
pub fn sample_weighted(
    pool: &[Candidate],
    cfg: &SelectionConfig,
    seed: u64,
) -> Result<Vec<Candidate>> {
    cfg.validate()?;
    let weights = slide_weights(pool, cfg.weight_clip);
    let mut g = rng::stream(seed, SAMPLING_STREAM);
    let mut out = Vec::new();
    for (cohort, w) in &weights {
        let mut left: Vec<&Candidate> = pool.iter().filter(|c| &c.cohort_id == cohort).collect();
        if left.len() <= cfg.n_per_indication {
            out.extend(left.into_iter().cloned());
            continue;
        }
        let mut lw: Vec<f64> = left.iter().map(|c| w[&c.slide_id]).collect();
        for _ in 0..cfg.n_per_indication {
            let total: f64 = lw.iter().sum();
            let target = rng::unit(&mut g) * total;
            let mut acc = 0.0;
            let mut pick = lw.len() - 1;
            for (i, wi) in lw.iter().enumerate() {
                acc += wi;
                if acc > target {
                    pick = i;
                    break;
                }
            }
            out.push(left.remove(pick).clone());
            lw.remove(pick);
        }
    }
    Ok(out)
}
