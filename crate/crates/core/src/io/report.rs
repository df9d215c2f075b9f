use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matching::MatchMode;
use crate::metrics::{Aggregate, Estimate, EvalConfig, MetricsReport, TileEval};

pub const REPORT_SCHEMA: &str = "nuclei-eval-report/1";

/// Note recorded in every report about the false-negative rule for
/// multi-label ground truth.
pub const MULTILABEL_NOTE: &str = "multi-label FN_c: counted when t is among the ground-truth labels \
and the prediction is not t (the literal rule, 'prediction is t and not in the list', can never fire)";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TileRow {
    pub tile_id: String,
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub dq: f64,
    pub sq: f64,
    pub pq: f64,
    pub both_empty: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema: String,
    pub tool_version: String,
    pub seed: Option<u64>,
    pub pq_match: MatchMode,
    pub class_match: MatchMode,
    pub config: EvalConfig,
    pub notes: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compared_to: Option<String>,
    pub overall: MetricsReport,
    pub strata: Vec<MetricsReport>,
    pub tiles: Vec<TileRow>,
}

impl EvalReport {
    pub fn new(
        cfg: &EvalConfig,
        agg: Aggregate,
        tiles: &[TileEval],
        compared_to: Option<String>,
    ) -> Self {
        EvalReport {
            schema: REPORT_SCHEMA.into(),
            tool_version: crate::VERSION.into(),
            seed: cfg.bootstrap.map(|b| b.seed),
            pq_match: cfg.pq_match,
            class_match: cfg.class_match,
            config: cfg.clone(),
            notes: vec![MULTILABEL_NOTE.into()],
            compared_to,
            overall: agg.overall,
            strata: agg.strata,
            tiles: tiles
                .iter()
                .map(|t| {
                    let q = t.quality();
                    TileRow {
                        tile_id: t.tile_id.clone(),
                        tp: t.pq.tp,
                        fp: t.pq.fp,
                        fn_: t.pq.fn_,
                        dq: q.dq,
                        sq: q.sq,
                        pq: q.pq,
                        both_empty: t.both_empty,
                    }
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            _ => Err(Error::invalid(format!(
                "unknown report format {s:?} (expected json or csv)"
            ))),
        }
    }
}

impl fmt::Display for ReportFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ReportFormat::Json => "json",
            ReportFormat::Csv => "csv",
        })
    }
}

pub fn report_to_json(r: &EvalReport) -> Result<String> {
    let mut s = serde_json::to_string_pretty(r)?;
    s.push('\n');
    Ok(s)
}

#[derive(Serialize)]
struct CsvRow<'a> {
    stratum: &'a str,
    metric: &'a str,
    class: &'a str,
    value: f64,
    ci_lo: Option<f64>,
    ci_hi: Option<f64>,
    n_tiles: usize,
}

/// One row per stratum, metric and class.
pub fn report_to_csv(r: &EvalReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::invalid(format!("csv: {e}"));
    for m in std::iter::once(&r.overall).chain(&r.strata) {
        let row = |metric, class, e: &Estimate| CsvRow {
            stratum: &m.stratum,
            metric,
            class,
            value: e.value,
            ci_lo: e.ci_lo,
            ci_hi: e.ci_hi,
            n_tiles: m.n_tiles,
        };
        w.serialize(row("dq", "all", &m.dq)).map_err(csv_err)?;
        w.serialize(row("sq", "all", &m.sq)).map_err(csv_err)?;
        w.serialize(row("pq", "all", &m.pq)).map_err(csv_err)?;
        for (t, e) in &m.f1 {
            w.serialize(row("f1", t.name(), e)).map_err(csv_err)?;
        }
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::invalid(format!("csv: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn write_report(r: &EvalReport, path: &Path, format: ReportFormat) -> Result<()> {
    let text = match format {
        ReportFormat::Json => report_to_json(r)?,
        ReportFormat::Csv => report_to_csv(r)?,
    };
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_report(path: &Path) -> Result<EvalReport> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let r: EvalReport = serde_json::from_str(&text).map_err(|e| Error::Schema {
        path: path.into(),
        message: e.to_string(),
    })?;
    if r.schema != REPORT_SCHEMA {
        return Err(Error::Schema {
            path: path.into(),
            message: format!("schema {:?}, expected {REPORT_SCHEMA:?}", r.schema),
        });
    }
    Ok(r)
}
