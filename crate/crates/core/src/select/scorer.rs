use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::scaling::{pool_dim, zscore_rows, ColumnStats, ScalerMode};
use super::TileFeature;
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainParams {
    pub learning_rate: f64,
    pub epochs: usize,
    pub l2: f64,
    pub hidden: usize,
}

impl Default for TrainParams {
    fn default() -> Self {
        TrainParams {
            learning_rate: 1e-2,
            epochs: 500,
            l2: 1e-4,
            hidden: 128,
        }
    }
}

/// Logistic (depth 1) or one-hidden-layer softplus (depth 2) presence model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PresenceScorer {
    pub depth: u8,
    /// Hidden weights, `hidden x d`; empty for depth 1.
    w1: Vec<Vec<f64>>,
    b1: Vec<f64>,
    w2: Vec<f64>,
    b2: f64,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn softplus(a: f64) -> f64 {
    a.max(0.0) + (-a.abs()).exp().ln_1p()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl PresenceScorer {
    fn hidden(&self, x: &[f64]) -> Vec<f64> {
        self.w1
            .iter()
            .zip(&self.b1)
            .map(|(w, b)| dot(w, x) + b)
            .collect()
    }

    fn logit(&self, x: &[f64]) -> f64 {
        if self.depth == 1 {
            dot(&self.w2, x) + self.b2
        } else {
            let h: Vec<f64> = self.hidden(x).into_iter().map(softplus).collect();
            dot(&self.w2, &h) + self.b2
        }
    }

    /// Presence probability, kept strictly inside `(0, 1)`.
    pub fn predict(&self, x: &[f64]) -> f64 {
        sigmoid(self.logit(x)).clamp(f64::EPSILON, 1.0 - f64::EPSILON)
    }

    pub fn predict_many(&self, rows: &[Vec<f64>]) -> Vec<f64> {
        rows.iter().map(|r| self.predict(r)).collect()
    }
}

pub fn fit_presence_scorer(
    x: &[Vec<f64>],
    y: &[bool],
    depth: u8,
    seed: u64,
) -> Result<PresenceScorer> {
    fit_with(x, y, depth, seed, &TrainParams::default())
}

/// Full-batch gradient descent on mean log-loss plus an L2 penalty on weights.
pub fn fit_with(
    x: &[Vec<f64>],
    y: &[bool],
    depth: u8,
    seed: u64,
    tp: &TrainParams,
) -> Result<PresenceScorer> {
    if depth != 1 && depth != 2 {
        return Err(Error::invalid(format!(
            "scorer depth must be 1 or 2, got {depth}"
        )));
    }
    if x.len() != y.len() {
        return Err(Error::shape(format!(
            "{} feature rows for {} labels",
            x.len(),
            y.len()
        )));
    }
    let pos = y.iter().filter(|&&v| v).count();
    if pos == 0 || pos == y.len() {
        return Err(Error::invalid("presence labels contain a single class"));
    }
    let d = x[0].len();
    if x.iter().any(|r| r.len() != d) {
        return Err(Error::shape("feature rows differ in dimension"));
    }
    if x.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("scorer features"));
    }
    let n = x.len() as f64;

    let mut s = if depth == 1 {
        PresenceScorer {
            depth,
            w1: Vec::new(),
            b1: Vec::new(),
            w2: vec![0.0; d],
            b2: 0.0,
        }
    } else {
        use rand::Rng as _;
        let mut g = rng::seeded(seed);
        let h = tp.hidden;
        let a1 = (6.0 / (d + h) as f64).sqrt();
        let a2 = (6.0 / (h + 1) as f64).sqrt();
        PresenceScorer {
            depth,
            w1: (0..h)
                .map(|_| (0..d).map(|_| g.gen_range(-a1..a1)).collect())
                .collect(),
            b1: vec![0.0; h],
            w2: (0..h).map(|_| g.gen_range(-a2..a2)).collect(),
            b2: 0.0,
        }
    };

    for _ in 0..tp.epochs {
        if depth == 1 {
            let mut gw = vec![0.0; d];
            let mut gb = 0.0;
            for (xi, &yi) in x.iter().zip(y) {
                let dz = sigmoid(s.logit(xi)) - f64::from(u8::from(yi));
                gb += dz;
                for (g, v) in gw.iter_mut().zip(xi) {
                    *g += dz * v;
                }
            }
            for (w, g) in s.w2.iter_mut().zip(&gw) {
                *w -= tp.learning_rate * (g / n + tp.l2 * *w);
            }
            s.b2 -= tp.learning_rate * gb / n;
        } else {
            let h = s.w1.len();
            let mut gw1 = vec![vec![0.0; d]; h];
            let mut gb1 = vec![0.0; h];
            let mut gw2 = vec![0.0; h];
            let mut gb2 = 0.0;
            for (xi, &yi) in x.iter().zip(y) {
                let pre = s.hidden(xi);
                let act: Vec<f64> = pre.iter().map(|&a| softplus(a)).collect();
                let dz = sigmoid(dot(&s.w2, &act) + s.b2) - f64::from(u8::from(yi));
                gb2 += dz;
                for j in 0..h {
                    gw2[j] += dz * act[j];
                    let da = dz * s.w2[j] * sigmoid(pre[j]);
                    gb1[j] += da;
                    for (g, v) in gw1[j].iter_mut().zip(xi) {
                        *g += da * v;
                    }
                }
            }
            let lr = tp.learning_rate;
            for j in 0..h {
                for (w, g) in s.w1[j].iter_mut().zip(&gw1[j]) {
                    *w -= lr * (g / n + tp.l2 * *w);
                }
                s.b1[j] -= lr * gb1[j] / n;
                s.w2[j] -= lr * (gw2[j] / n + tp.l2 * s.w2[j]);
            }
            s.b2 -= lr * gb2 / n;
        }
    }
    Ok(s)
}

/// Mean of per-class recalls at threshold 0.5, over the classes present.
pub fn balanced_accuracy(y: &[bool], p: &[f64]) -> f64 {
    let mut hit = [0usize; 2];
    let mut tot = [0usize; 2];
    for (&yi, &pi) in y.iter().zip(p) {
        let c = usize::from(yi);
        tot[c] += 1;
        if (pi >= 0.5) == yi {
            hit[c] += 1;
        }
    }
    let recalls: Vec<f64> = (0..2)
        .filter(|&c| tot[c] > 0)
        .map(|c| hit[c] as f64 / tot[c] as f64)
        .collect();
    if recalls.is_empty() {
        0.0
    } else {
        recalls.iter().sum::<f64>() / recalls.len() as f64
    }
}

/// Fold of every tile: sorted cohorts are dealt round-robin to `k` folds.
pub fn cohort_folds(cohorts: &[&str], k: usize) -> Result<Vec<usize>> {
    let mut distinct: Vec<&str> = cohorts.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    if k < 2 {
        return Err(Error::invalid(format!(
            "cross-validation needs at least 2 folds, got {k}"
        )));
    }
    if distinct.len() < k {
        return Err(Error::invalid(format!(
            "{} cohorts cannot fill {k} folds",
            distinct.len()
        )));
    }
    Ok(cohorts
        .iter()
        .map(|c| distinct.binary_search(c).expect("present") % k)
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CandidateSpec {
    pub depth: u8,
    pub scaler: ScalerMode,
    /// Index into the feature sets passed to [`select_best_scorer`].
    pub feature_set: usize,
}

impl CandidateSpec {
    /// Every depth x scaler x feature set combination.
    pub fn grid(feature_sets: usize) -> Vec<CandidateSpec> {
        let mut v = Vec::new();
        for depth in [1, 2] {
            for scaler in ScalerMode::ALL {
                for feature_set in 0..feature_sets {
                    v.push(CandidateSpec {
                        depth,
                        scaler,
                        feature_set,
                    });
                }
            }
        }
        v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub spec: CandidateSpec,
    pub fold_scores: Vec<f64>,
    pub mean: f64,
}

/// Winning candidate refitted on all tiles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestScorer {
    pub spec: CandidateSpec,
    pub cv: Vec<CvResult>,
    pub scorer: PresenceScorer,
    /// Training statistics for the global scaler.
    pub global_stats: Option<ColumnStats>,
}

impl BestScorer {
    /// Scores tiles given in the winner's feature set. Slide and cohort
    /// scaling use the statistics of the groups in `pool`.
    pub fn score(&self, pool: &[TileFeature]) -> Result<Vec<f64>> {
        let d = pool_dim(pool)?;
        let rows = scale_for(pool, self.spec.scaler, self.global_stats.as_ref(), d);
        Ok(self.scorer.predict_many(&rows))
    }
}

fn scale_for(
    pool: &[TileFeature],
    mode: ScalerMode,
    global: Option<&ColumnStats>,
    d: usize,
) -> Vec<Vec<f64>> {
    let rows: Vec<Vec<f64>> = pool.iter().map(|t| t.vector.clone()).collect();
    match (mode, global) {
        (ScalerMode::Global, Some(stats)) => rows
            .into_iter()
            .map(|mut r| {
                stats.apply(&mut r);
                r
            })
            .collect(),
        _ => {
            let keys: Vec<&str> = pool.iter().map(|t| mode.key(t)).collect();
            zscore_rows(&rows, &keys, d)
        }
    }
}

fn subset<T: Clone>(v: &[T], idx: &[usize]) -> Vec<T> {
    idx.iter().map(|&i| v[i].clone()).collect()
}

/// Cohort-grouped K-fold comparison of candidate scorers.
///
/// Ties in mean balanced accuracy go to the lower depth, then to the scaler
/// order global, slide, cohort, then to the lower feature set.
pub fn select_best_scorer(
    feature_sets: &[Vec<TileFeature>],
    labels: &[bool],
    candidates: &[CandidateSpec],
    folds: usize,
    seed: u64,
) -> Result<BestScorer> {
    select_best_scorer_with(
        feature_sets,
        labels,
        candidates,
        folds,
        seed,
        &TrainParams::default(),
    )
}

pub fn select_best_scorer_with(
    feature_sets: &[Vec<TileFeature>],
    labels: &[bool],
    candidates: &[CandidateSpec],
    folds: usize,
    seed: u64,
    tp: &TrainParams,
) -> Result<BestScorer> {
    if candidates.is_empty() {
        return Err(Error::invalid("no candidate scorers"));
    }
    let base = feature_sets
        .first()
        .ok_or_else(|| Error::invalid("no feature sets"))?;
    let mut dims = Vec::new();
    for fs in feature_sets {
        dims.push(pool_dim(fs)?);
        if fs.len() != base.len() || fs.iter().zip(base).any(|(a, b)| a.tile_id != b.tile_id) {
            return Err(Error::shape(
                "feature sets must list the same tiles in the same order",
            ));
        }
    }
    if labels.len() != base.len() {
        return Err(Error::shape(format!(
            "{} labels for {} tiles",
            labels.len(),
            base.len()
        )));
    }
    if let Some(c) = candidates
        .iter()
        .find(|c| c.feature_set >= feature_sets.len())
    {
        return Err(Error::invalid(format!(
            "candidate refers to feature set {}",
            c.feature_set
        )));
    }
    let cohorts: Vec<&str> = base.iter().map(|t| t.cohort_id.as_str()).collect();
    let fold_of = cohort_folds(&cohorts, folds)?;

    let jobs: Vec<(usize, usize)> = (0..candidates.len())
        .flat_map(|c| (0..folds).map(move |f| (c, f)))
        .collect();
    let scores: Vec<f64> = jobs
        .par_iter()
        .map(|&(ci, f)| {
            let spec = candidates[ci];
            let fs = &feature_sets[spec.feature_set];
            let d = dims[spec.feature_set];
            let train: Vec<usize> = (0..fs.len()).filter(|&i| fold_of[i] != f).collect();
            let test: Vec<usize> = (0..fs.len()).filter(|&i| fold_of[i] == f).collect();
            let (xtr, xte) = if spec.scaler == ScalerMode::Global {
                let tr = subset(fs, &train);
                let stats = ColumnStats::fit(tr.iter().map(|t| t.vector.as_slice()), d);
                (
                    scale_for(&tr, spec.scaler, Some(&stats), d),
                    scale_for(&subset(fs, &test), spec.scaler, Some(&stats), d),
                )
            } else {
                let all = scale_for(fs, spec.scaler, None, d);
                (subset(&all, &train), subset(&all, &test))
            };
            let model = fit_with(&xtr, &subset(labels, &train), spec.depth, seed, tp)?;
            Ok(balanced_accuracy(
                &subset(labels, &test),
                &model.predict_many(&xte),
            ))
        })
        .collect::<Result<_>>()?;

    let cv: Vec<CvResult> = candidates
        .iter()
        .enumerate()
        .map(|(ci, &spec)| {
            let fold_scores = scores[ci * folds..(ci + 1) * folds].to_vec();
            let mean = fold_scores.iter().sum::<f64>() / folds as f64;
            CvResult {
                spec,
                fold_scores,
                mean,
            }
        })
        .collect();
    let best = cv
        .iter()
        .fold(None::<&CvResult>, |best, r| match best {
            Some(b) if b.mean > r.mean + 1e-12 => Some(b),
            Some(b) if (b.mean - r.mean).abs() <= 1e-12 && b.spec <= r.spec => Some(b),
            _ => Some(r),
        })
        .expect("non-empty")
        .spec;

    let fs = &feature_sets[best.feature_set];
    let d = dims[best.feature_set];
    let global_stats = (best.scaler == ScalerMode::Global)
        .then(|| ColumnStats::fit(fs.iter().map(|t| t.vector.as_slice()), d));
    let x = scale_for(fs, best.scaler, global_stats.as_ref(), d);
    let scorer = fit_with(&x, labels, best.depth, seed, tp)?;
    Ok(BestScorer {
        spec: best,
        cv,
        scorer,
        global_stats,
    })
}
