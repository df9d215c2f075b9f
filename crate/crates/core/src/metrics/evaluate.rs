use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::bootstrap::{bootstrap_many, paired_pvalues, BootstrapConfig};
use super::classification::{classification_counts, multilabel_counts, ClassCounts};
use super::panoptic::{panoptic_quality, PanopticQuality, PqCounts};
use crate::domain::{CellType, TypedInstanceMap};
use crate::error::{Error, Result};
use crate::matching::{match_instances, MatchMode, MatchParams};

/// How tiles are scored and summarized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    /// Pairing that feeds PQ/DQ/SQ.
    pub pq_match: MatchMode,
    /// Pairing that feeds the per-class counts.
    pub class_match: MatchMode,
    pub match_params: MatchParams,
    /// Count tiles where neither side has a nucleus (scored 1.0 in the
    /// per-tile mean); excluded by default.
    pub include_empty_tiles: bool,
    pub bootstrap: Option<BootstrapConfig>,
    pub stratify_by: Option<String>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            pq_match: MatchMode::Iou,
            class_match: MatchMode::Centroid,
            match_params: MatchParams::default(),
            include_empty_tiles: false,
            bootstrap: Some(BootstrapConfig::default()),
            stratify_by: None,
        }
    }
}

/// Counts of one evaluated tile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TileEval {
    pub tile_id: String,
    pub strata: BTreeMap<String, String>,
    pub pq: PqCounts,
    pub both_empty: bool,
    pub classes: ClassCounts,
    pub multilabel: bool,
}

impl TileEval {
    pub fn quality(&self) -> PanopticQuality {
        PanopticQuality::from_counts(self.pq)
    }
}

pub fn evaluate_tile(
    tile_id: &str,
    strata: BTreeMap<String, String>,
    gt: &TypedInstanceMap,
    pred: &TypedInstanceMap,
    cfg: &EvalConfig,
) -> Result<TileEval> {
    let pq = match cfg.pq_match {
        MatchMode::Iou => panoptic_quality(gt.map(), pred.map())?.counts,
        MatchMode::Centroid => {
            let m = match_instances(gt, pred, MatchMode::Centroid, &cfg.match_params)?;
            let mut c = PqCounts::default();
            for p in m
                .pairs
                .iter()
                .filter(|p| p.iou > cfg.match_params.iou_threshold)
            {
                c.tp += 1;
                c.iou_sum += p.iou;
            }
            c.fn_ = gt.len() as u64 - c.tp;
            c.fp = pred.len() as u64 - c.tp;
            c
        }
    };
    let m = match_instances(gt, pred, cfg.class_match, &cfg.match_params)?;
    let multilabel = gt.is_multilabel();
    let classes = if multilabel {
        multilabel_counts(gt, pred, &m)?
    } else {
        classification_counts(gt, pred, &m)?
    };
    Ok(TileEval {
        tile_id: tile_id.to_string(),
        strata,
        both_empty: pq.is_empty(),
        pq,
        classes,
        multilabel,
    })
}

/// A metric value with optional bootstrap summary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    /// Computed on the pooled counts of all tiles.
    pub value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub median: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ci_lo: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ci_hi: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_value: Option<f64>,
}

impl Estimate {
    fn plain(value: f64) -> Self {
        Estimate {
            value,
            median: None,
            ci_lo: None,
            ci_hi: None,
            p_value: None,
        }
    }
}

/// Micro-aggregated metrics over a set of tiles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// `"all"` or `"<key>=<value>"`.
    pub stratum: String,
    pub n_tiles: usize,
    pub n_both_empty: usize,
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub dq: Estimate,
    pub sq: Estimate,
    pub pq: Estimate,
    /// Unpooled mean of per-tile PQ.
    pub tile_mean_pq: f64,
    pub f1: BTreeMap<CellType, Estimate>,
    pub class_counts: ClassCounts,
}

fn pooled_stats(tiles: &[&TileEval], types: &[CellType]) -> Vec<f64> {
    let pq: PqCounts = tiles.iter().map(|t| &t.pq).sum();
    let cc: ClassCounts = tiles.iter().map(|t| &t.classes).sum();
    let mut out = Vec::with_capacity(3 + types.len());
    out.push(pq.dq());
    out.push(pq.sq());
    out.push(pq.dq() * pq.sq());
    out.extend(types.iter().map(|&t| cc.get(t).f1()));
    out
}

fn summarize(
    stratum: String,
    tiles: &[&TileEval],
    n_both_empty: usize,
    cfg: &EvalConfig,
) -> Result<MetricsReport> {
    let pq: PqCounts = tiles.iter().map(|t| &t.pq).sum();
    let cc: ClassCounts = tiles.iter().map(|t| &t.classes).sum();
    let types = cc.present_types();
    let mut est: Vec<Estimate> = pooled_stats(tiles, &types)
        .into_iter()
        .map(Estimate::plain)
        .collect();
    if let (Some(b), false) = (cfg.bootstrap.as_ref(), tiles.is_empty()) {
        let intervals = bootstrap_many(
            tiles,
            |s| {
                let s: Vec<&TileEval> = s.iter().map(|t| **t).collect();
                pooled_stats(&s, &types)
            },
            b,
        )?;
        for (e, iv) in est.iter_mut().zip(intervals) {
            e.median = Some(iv.median);
            e.ci_lo = Some(iv.lo);
            e.ci_hi = Some(iv.hi);
        }
    }
    let tile_mean_pq = if tiles.is_empty() {
        0.0
    } else {
        tiles.iter().map(|t| t.quality().pq).sum::<f64>() / tiles.len() as f64
    };
    Ok(MetricsReport {
        stratum,
        n_tiles: tiles.len(),
        n_both_empty,
        tp: pq.tp,
        fp: pq.fp,
        fn_: pq.fn_,
        dq: est[0],
        sq: est[1],
        pq: est[2],
        tile_mean_pq,
        f1: types
            .iter()
            .copied()
            .zip(est[3..].iter().copied())
            .collect(),
        class_counts: cc,
    })
}

/// Overall report followed by one report per stratum value (sorted).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub overall: MetricsReport,
    pub strata: Vec<MetricsReport>,
}

fn strata_groups<'a>(
    tiles: &'a [TileEval],
    cfg: &EvalConfig,
) -> Result<Vec<(String, Vec<&'a TileEval>)>> {
    let Some(key) = cfg.stratify_by.as_deref() else {
        return Ok(Vec::new());
    };
    let mut groups: BTreeMap<&str, Vec<&TileEval>> = BTreeMap::new();
    for t in tiles {
        let v = t.strata.get(key).ok_or_else(|| {
            Error::invalid(format!("tile {} has no stratum key {key:?}", t.tile_id))
        })?;
        groups.entry(v.as_str()).or_default().push(t);
    }
    Ok(groups
        .into_iter()
        .map(|(v, g)| (format!("{key}={v}"), g))
        .collect())
}

fn kept<'a>(tiles: &[&'a TileEval], cfg: &EvalConfig) -> (Vec<&'a TileEval>, usize) {
    let empty = tiles.iter().filter(|t| t.both_empty).count();
    let keep = tiles
        .iter()
        .copied()
        .filter(|t| cfg.include_empty_tiles || !t.both_empty)
        .collect();
    (keep, empty)
}

/// Pools counts within each stratum before forming any ratio.
pub fn aggregate(tiles: &[TileEval], cfg: &EvalConfig) -> Result<Aggregate> {
    let all: Vec<&TileEval> = tiles.iter().collect();
    let (keep, empty) = kept(&all, cfg);
    let overall = summarize("all".into(), &keep, empty, cfg)?;
    let strata = strata_groups(tiles, cfg)?
        .into_iter()
        .map(|(name, group)| {
            let (keep, empty) = kept(&group, cfg);
            summarize(name, &keep, empty, cfg)
        })
        .collect::<Result<_>>()?;
    Ok(Aggregate { overall, strata })
}

/// Adds paired bootstrap p-values of `a - b` to every estimate of `report`.
///
/// `a` and `b` must list the same tiles in the same order.
pub fn attach_pvalues(
    report: &mut Aggregate,
    a: &[TileEval],
    b: &[TileEval],
    cfg: &EvalConfig,
) -> Result<()> {
    let ids_a: Vec<&str> = a.iter().map(|t| t.tile_id.as_str()).collect();
    let ids_b: Vec<&str> = b.iter().map(|t| t.tile_id.as_str()).collect();
    if ids_a != ids_b {
        return Err(Error::invalid(
            "paired comparison needs the same tiles on both sides",
        ));
    }
    let boot = cfg.bootstrap.unwrap_or_default();
    let fill = |r: &mut MetricsReport, sel: &dyn Fn(&TileEval) -> bool| -> Result<()> {
        let pa: Vec<&TileEval> = a
            .iter()
            .filter(|t| sel(t))
            .filter(|t| cfg.include_empty_tiles || !t.both_empty)
            .collect();
        let pb: Vec<&TileEval> = b
            .iter()
            .zip(a)
            .filter(|(_, ta)| sel(ta))
            .filter(|(_, ta)| cfg.include_empty_tiles || !ta.both_empty)
            .map(|(tb, _)| tb)
            .collect();
        if pa.is_empty() {
            return Ok(());
        }
        let types: Vec<CellType> = r.f1.keys().copied().collect();
        let p = paired_pvalues(
            &pa,
            &pb,
            |s| {
                let s: Vec<&TileEval> = s.iter().map(|t| **t).collect();
                pooled_stats(&s, &types)
            },
            &boot,
        )?;
        r.dq.p_value = Some(p[0]);
        r.sq.p_value = Some(p[1]);
        r.pq.p_value = Some(p[2]);
        for (e, pv) in r.f1.values_mut().zip(&p[3..]) {
            e.p_value = Some(*pv);
        }
        Ok(())
    };
    fill(&mut report.overall, &|_| true)?;
    if let Some(key) = cfg.stratify_by.as_deref() {
        for r in &mut report.strata {
            let value = r.stratum[key.len() + 1..].to_string();
            fill(r, &|t: &TileEval| {
                t.strata.get(key).map(String::as_str) == Some(value.as_str())
            })?;
        }
    }
    Ok(())
}

/// Strata, ground truth and prediction of one tile.
pub type TileInput = (BTreeMap<String, String>, TypedInstanceMap, TypedInstanceMap);

/// Loads and evaluates tiles on the current thread pool; the output follows
/// the order of `ids` whatever the number of workers.
pub fn evaluate_dataset<F>(ids: &[String], load: F, cfg: &EvalConfig) -> Result<Vec<TileEval>>
where
    F: Fn(&str) -> Result<TileInput> + Sync,
{
    ids.par_iter()
        .map(|id| {
            let (strata, gt, pred) = load(id)?;
            evaluate_tile(id, strata, &gt, &pred, cfg)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tile(id: &str, stratum: &str, tp: u64, fp: u64, fn_: u64) -> TileEval {
        TileEval {
            tile_id: id.into(),
            strata: [("indication".to_string(), stratum.to_string())].into(),
            pq: PqCounts {
                tp,
                fp,
                fn_,
                iou_sum: tp as f64 * 0.8,
            },
            both_empty: tp + fp + fn_ == 0,
            classes: ClassCounts::default(),
            multilabel: false,
        }
    }

    fn cfg(strat: bool) -> EvalConfig {
        EvalConfig {
            bootstrap: None,
            stratify_by: strat.then(|| "indication".to_string()),
            ..Default::default()
        }
    }

    #[test]
    fn pooled_not_averaged() {
        // Lung: 10 tiles at dq 0.8; Colon: 30 tiles at dq 0.6 with more nuclei.
        let mut tiles = Vec::new();
        for i in 0..10 {
            tiles.push(tile(&format!("l{i}"), "Lung", 4, 1, 1));
        }
        for i in 0..30 {
            tiles.push(tile(&format!("c{i}"), "Colon", 6, 4, 4));
        }
        let agg = aggregate(&tiles, &cfg(true)).unwrap();
        let lung = agg
            .strata
            .iter()
            .find(|r| r.stratum == "indication=Lung")
            .unwrap();
        let colon = agg
            .strata
            .iter()
            .find(|r| r.stratum == "indication=Colon")
            .unwrap();
        assert!((lung.dq.value - 0.8).abs() < 1e-12);
        assert!((colon.dq.value - 0.6).abs() < 1e-12);
        let expect = 220.0 / (220.0 + 0.5 * 130.0 + 0.5 * 130.0);
        assert_eq!(agg.overall.dq.value, expect);
        assert!((agg.overall.dq.value - 0.7).abs() > 0.05);
        assert_eq!(agg.overall.tp, lung.tp + colon.tp);
    }

    #[test]
    fn single_stratum_matches_unstratified() {
        let tiles: Vec<_> = (0..5)
            .map(|i| tile(&format!("t{i}"), "Lung", i, 1, 2))
            .collect();
        let a = aggregate(&tiles, &cfg(true)).unwrap();
        let b = aggregate(&tiles, &cfg(false)).unwrap();
        let mut s = a.strata[0].clone();
        s.stratum = "all".into();
        assert_eq!(s, b.overall);
    }

    #[test]
    fn missing_stratum_key_is_error() {
        let tiles = vec![tile("t", "Lung", 1, 0, 0)];
        let mut c = cfg(true);
        c.stratify_by = Some("scanner".into());
        assert!(aggregate(&tiles, &c).is_err());
    }

    #[test]
    fn empty_tiles_excluded_by_default() {
        let tiles = vec![tile("a", "Lung", 2, 2, 0), tile("b", "Lung", 0, 0, 0)];
        let r = aggregate(&tiles, &cfg(false)).unwrap().overall;
        assert_eq!((r.n_tiles, r.n_both_empty), (1, 1));
        let mut c = cfg(false);
        c.include_empty_tiles = true;
        let r2 = aggregate(&tiles, &c).unwrap().overall;
        assert_eq!(r2.n_tiles, 2);
        assert_eq!(r2.pq.value, r.pq.value);
        assert!(r2.tile_mean_pq > r.tile_mean_pq);
    }
}
