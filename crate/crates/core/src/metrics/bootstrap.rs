//! Tile-level bootstrap.
//!
//! Replicate `r` draws its resample from stream `r` of the seed, so replicates
//! can be computed in any order on any number of threads and still produce
//! bit-identical results.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub n_repeats: usize,
    pub level: f64,
    pub seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        BootstrapConfig {
            n_repeats: 1000,
            level: 0.95,
            seed: crate::DEFAULT_SEED,
        }
    }
}

impl BootstrapConfig {
    fn validate(&self) -> Result<()> {
        if self.n_repeats == 0 {
            return Err(Error::invalid("bootstrap needs at least one repeat"));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::invalid(format!(
                "confidence level {} not in (0, 1)",
                self.level
            )));
        }
        Ok(())
    }
}

/// Point estimate with percentile bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    /// Median of the replicate statistics.
    pub median: f64,
    /// Statistic of the unresampled data.
    pub plug_in: f64,
    pub lo: f64,
    pub hi: f64,
}

/// Percentile with linear interpolation between order statistics; `sorted`
/// must be ascending and non-empty.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + (sorted[hi] - sorted[lo]) * frac
    }
}

fn resample(n: usize, seed: u64, replicate: usize, out: &mut Vec<usize>) {
    let mut g = rng::stream(seed, replicate as u64);
    out.clear();
    out.extend((0..n).map(|_| rng::index(&mut g, n)));
}

/// Resample indices of replicate `replicate`, exposed for verification.
pub fn resample_indices(n: usize, seed: u64, replicate: usize) -> Vec<usize> {
    let mut v = Vec::with_capacity(n);
    resample(n, seed, replicate, &mut v);
    v
}

/// Replicate values of several statistics at once, `[replicate][statistic]`.
pub fn bootstrap_replicates<T, F>(
    tiles: &[T],
    statistics: F,
    cfg: &BootstrapConfig,
) -> Result<Vec<Vec<f64>>>
where
    T: Sync,
    F: Fn(&[&T]) -> Vec<f64> + Sync,
{
    cfg.validate()?;
    if tiles.is_empty() {
        return Err(Error::invalid("bootstrap over zero tiles"));
    }
    let n = tiles.len();
    Ok((0..cfg.n_repeats)
        .into_par_iter()
        .map_init(
            || (Vec::with_capacity(n), Vec::with_capacity(n)),
            |(idx, sample): &mut (Vec<usize>, Vec<&T>), r| {
                resample(n, cfg.seed, r, idx);
                sample.clear();
                sample.extend(idx.iter().map(|&i| &tiles[i]));
                statistics(sample)
            },
        )
        .collect())
}

/// Confidence intervals for several statistics from one set of resamples.
pub fn bootstrap_many<T, F>(
    tiles: &[T],
    statistics: F,
    cfg: &BootstrapConfig,
) -> Result<Vec<Interval>>
where
    T: Sync,
    F: Fn(&[&T]) -> Vec<f64> + Sync,
{
    let reps = bootstrap_replicates(tiles, &statistics, cfg)?;
    let all: Vec<&T> = tiles.iter().collect();
    let plug = statistics(&all);
    let alpha = (1.0 - cfg.level) / 2.0;
    Ok((0..plug.len())
        .map(|k| {
            let mut col: Vec<f64> = reps.iter().map(|r| r[k]).collect();
            col.sort_by(f64::total_cmp);
            Interval {
                median: percentile(&col, 0.5),
                plug_in: plug[k],
                lo: percentile(&col, alpha),
                hi: percentile(&col, 1.0 - alpha),
            }
        })
        .collect())
}

pub fn bootstrap_ci<T, F>(tiles: &[T], statistic: F, cfg: &BootstrapConfig) -> Result<Interval>
where
    T: Sync,
    F: Fn(&[&T]) -> f64 + Sync,
{
    Ok(bootstrap_many(tiles, |s| vec![statistic(s)], cfg)?[0])
}

/// Two-sided bootstrap p-values for `A - B` on several statistics.
///
/// Both systems are resampled with the same tile indices. For each statistic
/// `p = 2 min(P(delta <= 0), P(delta >= 0))`, clamped to `[2 / n_repeats, 1]`.
pub fn paired_pvalues<T, F>(
    a: &[T],
    b: &[T],
    statistics: F,
    cfg: &BootstrapConfig,
) -> Result<Vec<f64>>
where
    T: Sync,
    F: Fn(&[&T]) -> Vec<f64> + Sync,
{
    if a.len() != b.len() {
        return Err(Error::invalid(format!(
            "paired comparison over different tile sets ({} vs {} tiles)",
            a.len(),
            b.len()
        )));
    }
    let pairs: Vec<(&T, &T)> = a.iter().zip(b).collect();
    let deltas = bootstrap_replicates(
        &pairs,
        |s| {
            let sa: Vec<&T> = s.iter().map(|p| p.0).collect();
            let sb: Vec<&T> = s.iter().map(|p| p.1).collect();
            statistics(&sa)
                .into_iter()
                .zip(statistics(&sb))
                .map(|(x, y)| x - y)
                .collect()
        },
        cfg,
    )?;
    let k = deltas.first().map_or(0, Vec::len);
    let n = cfg.n_repeats as f64;
    Ok((0..k)
        .map(|j| {
            let le = deltas.iter().filter(|d| d[j] <= 0.0).count() as f64 / n;
            let ge = deltas.iter().filter(|d| d[j] >= 0.0).count() as f64 / n;
            (2.0 * le.min(ge)).clamp(2.0 / n, 1.0)
        })
        .collect())
}

pub fn paired_pvalue<T, F>(a: &[T], b: &[T], statistic: F, cfg: &BootstrapConfig) -> Result<f64>
where
    T: Sync,
    F: Fn(&[&T]) -> f64 + Sync,
{
    Ok(paired_pvalues(a, b, |s| vec![statistic(s)], cfg)?[0])
}
