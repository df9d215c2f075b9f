//! Command-line front end.

use std::collections::{BTreeMap, BTreeSet};
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::consensus::{
    cluster_annotations, cluster_centroid, consensus_instances, expand_contours, vote_consensus,
    ConsensusParams, ContourProvider,
};
use crate::domain::{AnnotationSet, ModelOutput};
use crate::error::{Error, Result};
use crate::io::{self, EvalReport, PointsRequest, ReportFormat, TileRequest, TypedTile};
use crate::matching::{MatchMode, MatchParams};
use crate::metrics::{
    aggregate, attach_pvalues, evaluate_dataset, BootstrapConfig, EvalConfig, TileInput,
};
use crate::postprocess::{postprocess, PostprocessParams, VoteMode};
use crate::select::{
    diversity_pool, enrich_rare, ensemble_uncertainty, merge_pools, sample_weighted, slide_weights,
    uncertainty_pool, Candidate, SelectionConfig,
};

pub const WORKERS_ENV: &str = "NUCLEI_KIT_WORKERS";

#[derive(Parser, Debug)]
#[command(
    name = "nuclei-kit",
    version,
    about = "Nuclei post-processing, evaluation, consensus and tile selection"
)]
struct Cli {
    /// Worker threads [default: $NUCLEI_KIT_WORKERS, else available parallelism]
    #[arg(long, global = true)]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Turn network output maps into a typed instance map
    Postprocess(PostprocessArgs),
    /// Score predicted tiles against ground truth
    Eval(EvalArgs),
    /// Merge several raters' annotations of a tile
    Consensus(ConsensusArgs),
    /// Pick tiles for annotation
    Select(SelectArgs),
    /// Convert an evaluation report
    Report(ReportArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum VoteArg {
    ProbabilitySum,
    ArgmaxCount,
}

#[derive(Args, Debug)]
struct PostprocessArgs {
    /// Foreground probability, f32 [H, W] or [1, H, W]
    #[arg(long)]
    np: PathBuf,
    /// Horizontal and vertical maps, f32 [2, H, W]
    #[arg(long)]
    hv: PathBuf,
    /// Class probabilities, f32 [C, H, W]
    #[arg(long)]
    nt: PathBuf,
    /// Output instance tensor; the labels go to the same path with a .json extension
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    fg_thresh: f32,
    #[arg(long, default_value_t = 0.4)]
    grad_thresh: f32,
    #[arg(long, default_value_t = 10)]
    min_size: usize,
    #[arg(long, value_enum, default_value_t = VoteArg::ProbabilitySum)]
    vote: VoteArg,
    /// Tile id recorded in the sidecar [default: output file stem]
    #[arg(long)]
    tile_id: Option<String>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    gt: PathBuf,
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Pairing for PQ/DQ/SQ: iou or centroid
    #[arg(long = "match", default_value = "iou")]
    match_mode: String,
    /// Pairing for per-class counts: iou or centroid
    #[arg(long, default_value = "centroid")]
    class_match: String,
    /// Bootstrap replicates; 0 disables intervals
    #[arg(long, default_value_t = 1000)]
    bootstrap: usize,
    #[arg(long, default_value_t = crate::DEFAULT_SEED)]
    seed: u64,
    #[arg(long, default_value_t = 0.95)]
    level: f64,
    /// Centroid gate in pixels
    #[arg(long, default_value_t = 15.0)]
    max_dist: f64,
    /// Sidecar metadata key to stratify by
    #[arg(long)]
    stratify_by: Option<String>,
    /// Second prediction directory; adds paired p-values of pred minus this
    #[arg(long)]
    paired: Option<PathBuf>,
    /// Count tiles without any nucleus on either side
    #[arg(long)]
    include_empty: bool,
    /// json or csv
    #[arg(long, default_value = "json")]
    format: String,
}

#[derive(Args, Debug)]
struct ConsensusArgs {
    #[arg(long, num_args = 1.., required = true)]
    raters: Vec<PathBuf>,
    /// Output sidecar; the instance tensor goes to the same path with a .nuct extension
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0.4)]
    iou: f64,
    #[arg(long, default_value_t = 2)]
    min_raters: usize,
    #[arg(long, default_value_t = 8.0)]
    stub_radius: f64,
    /// Write the points an external contour model must segment, then stop
    #[arg(long)]
    provider_request: Option<PathBuf>,
    /// Directory holding <tile>.points.nuct and <tile>.centroids.nuct masks
    #[arg(long)]
    provider_response: Option<PathBuf>,
    /// Metadata stored in the sidecar, KEY=VALUE
    #[arg(long = "meta", value_parser = parse_key_value)]
    meta: Vec<(String, String)>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum Strategy {
    Diversity,
    Rare,
    Uncertainty,
}

#[derive(Args, Debug)]
struct SelectArgs {
    /// Feature matrix, f32 [N, D]
    #[arg(long)]
    features: PathBuf,
    /// Row metadata (tile, slide, cohort, optional per-type scores)
    #[arg(long)]
    meta: PathBuf,
    #[arg(long, value_enum)]
    strategy: Strategy,
    #[arg(long)]
    out: PathBuf,
    /// Ensemble member probabilities, f32 [N, M] (uncertainty strategy)
    #[arg(long)]
    probs: Option<PathBuf>,
    #[arg(long, default_value_t = 20)]
    k: usize,
    #[arg(long, default_value_t = 50)]
    n: usize,
    #[arg(long, default_value_t = crate::DEFAULT_SEED)]
    seed: u64,
    #[arg(long, default_value = "0.5,2.0", value_parser = parse_f64_pair)]
    clip: (f64, f64),
    #[arg(long, default_value_t = 90.0)]
    percentile: f64,
    #[arg(long, default_value_t = 0.4)]
    prob_floor: f64,
    #[arg(long, default_value_t = 2)]
    top: usize,
    #[arg(long, default_value = "5,20", value_parser = parse_usize_pair)]
    k_range: (usize, usize),
}

#[derive(Args, Debug)]
struct ReportArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// json or csv
    #[arg(long)]
    format: String,
    #[arg(long)]
    out: PathBuf,
}

fn parse_key_value(s: &str) -> std::result::Result<(String, String), String> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| format!("expected KEY=VALUE, got {s:?}"))?;
    if k.is_empty() {
        return Err(format!("empty key in {s:?}"));
    }
    Ok((k.to_string(), v.to_string()))
}

fn parse_pair<T: std::str::FromStr>(s: &str) -> std::result::Result<(T, T), String> {
    let (a, b) = s
        .split_once(',')
        .ok_or_else(|| format!("expected A,B, got {s:?}"))?;
    let p = |x: &str| {
        x.trim()
            .parse::<T>()
            .map_err(|_| format!("not a number: {x:?}"))
    };
    Ok((p(a)?, p(b)?))
}

fn parse_f64_pair(s: &str) -> std::result::Result<(f64, f64), String> {
    parse_pair(s)
}

fn parse_usize_pair(s: &str) -> std::result::Result<(usize, usize), String> {
    parse_pair(s)
}

/// Worker count from the flag, then the environment, then the machine.
pub fn resolve_workers(flag: Option<usize>) -> Result<usize> {
    let n = match flag {
        Some(n) => n,
        None => match std::env::var(WORKERS_ENV) {
            Ok(v) => v.trim().parse().map_err(|_| {
                Error::invalid(format!("{WORKERS_ENV}={v:?} is not a worker count"))
            })?,
            Err(_) => std::thread::available_parallelism().map_or(1, |n| n.get()),
        },
    };
    if n == 0 {
        return Err(Error::invalid("worker count must be positive"));
    }
    Ok(n)
}

/// Runs `f` on a dedicated pool of `n` threads.
pub fn with_workers<T: Send>(n: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build()
        .map_err(|e| Error::invalid(format!("cannot start {n} workers: {e}")))?;
    Ok(pool.install(f))
}

/// Parses `args` (program name first), runs the command and returns the exit
/// code: 0 on success, 1 for invalid input, 2 for I/O failures.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_io() {
                2
            } else {
                1
            }
        }
    }
}

fn execute(cli: Cli) -> Result<()> {
    let n = resolve_workers(cli.workers)?;
    log::info!("using {n} worker(s)");
    with_workers(n, move || match cli.command {
        Command::Postprocess(a) => cmd_postprocess(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Consensus(a) => cmd_consensus(a),
        Command::Select(a) => cmd_select(a),
        Command::Report(a) => cmd_report(a),
    })?
}

fn in_file(path: &Path, e: Error) -> Error {
    match e {
        Error::Io { .. } | Error::Schema { .. } => e,
        other => Error::Schema {
            path: path.into(),
            message: other.to_string(),
        },
    }
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}

fn cmd_postprocess(a: PostprocessArgs) -> Result<()> {
    let params = PostprocessParams {
        fg_threshold: a.fg_thresh,
        grad_threshold: a.grad_thresh,
        min_instance_area: a.min_size,
        vote: match a.vote {
            VoteArg::ProbabilitySum => VoteMode::ProbabilitySum,
            VoteArg::ArgmaxCount => VoteMode::ArgmaxCount,
        },
    };
    params.validate()?;
    let planes = |p: &Path| {
        io::read_tensor(p)?
            .to_planes_f32()
            .map_err(|e| in_file(p, e))
    };
    let mut np = planes(&a.np)?;
    let mut hv = planes(&a.hv)?;
    let nt = planes(&a.nt)?;
    if np.len() != 1 {
        return Err(in_file(
            &a.np,
            Error::shape(format!("expected one plane, found {}", np.len())),
        ));
    }
    if hv.len() != 2 {
        return Err(in_file(
            &a.hv,
            Error::shape(format!("expected two planes, found {}", hv.len())),
        ));
    }
    let v = hv.pop().expect("two planes");
    let h = hv.pop().expect("two planes");
    let out = ModelOutput::new(np.pop().expect("one plane"), h, v, nt).map_err(|e| {
        Error::invalid(format!(
            "{}, {}, {}: {e}",
            a.np.display(),
            a.hv.display(),
            a.nt.display()
        ))
    })?;
    let typed = postprocess(&out, &params)?;
    let tensor = a.out.with_extension("nuct");
    let tile_id = a.tile_id.unwrap_or_else(|| stem(&tensor));
    log::info!("{tile_id}: {} instances", typed.len());
    io::write_typed_tile(
        &TypedTile {
            tile_id,
            meta: BTreeMap::new(),
            map: typed,
        },
        &tensor,
    )
}

fn stem(p: &Path) -> String {
    p.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

fn load_pair(gt_dir: &Path, pred_dir: &Path, id: &str) -> Result<TileInput> {
    let (gp, _) = io::tile_paths(gt_dir, id);
    let (pp, _) = io::tile_paths(pred_dir, id);
    let gt = io::read_typed_tile(&gp)?;
    let pred = io::read_typed_tile(&pp)?;
    if gt.map.shape() != pred.map.shape() {
        return Err(in_file(
            &pp,
            Error::shape(format!(
                "prediction is {:?}, ground truth is {:?}",
                pred.map.shape(),
                gt.map.shape()
            )),
        ));
    }
    Ok((gt.meta, gt.map, pred.map))
}

fn check_same_tiles(gt_dir: &Path, ids: &[String], other: &Path) -> Result<()> {
    let theirs: BTreeSet<String> = io::list_tiles(other)?.into_iter().collect();
    let ours: BTreeSet<String> = ids.iter().cloned().collect();
    if let Some(extra) = theirs.difference(&ours).next() {
        return Err(in_file(
            &other.join(format!("{extra}.nuct")),
            Error::invalid(format!("tile has no ground truth in {}", gt_dir.display())),
        ));
    }
    Ok(())
}

fn cmd_eval(a: EvalArgs) -> Result<()> {
    let format: ReportFormat = a.format.parse()?;
    let bootstrap = (a.bootstrap > 0).then_some(BootstrapConfig {
        n_repeats: a.bootstrap,
        level: a.level,
        seed: a.seed,
    });
    let cfg = EvalConfig {
        pq_match: a.match_mode.parse::<MatchMode>()?,
        class_match: a.class_match.parse::<MatchMode>()?,
        match_params: MatchParams {
            max_pair_dist: a.max_dist,
            ..MatchParams::default()
        },
        include_empty_tiles: a.include_empty,
        bootstrap,
        stratify_by: a.stratify_by.clone(),
    };
    let ids = io::list_tiles(&a.gt)?;
    if ids.is_empty() {
        return Err(Error::Schema {
            path: a.gt.clone(),
            message: "no .nuct tiles found".into(),
        });
    }
    check_same_tiles(&a.gt, &ids, &a.pred)?;
    let tiles = evaluate_dataset(&ids, |id| load_pair(&a.gt, &a.pred, id), &cfg)?;
    let mut agg = aggregate(&tiles, &cfg)?;
    if let Some(other) = &a.paired {
        check_same_tiles(&a.gt, &ids, other)?;
        let base = evaluate_dataset(&ids, |id| load_pair(&a.gt, other, id), &cfg)?;
        attach_pvalues(&mut agg, &tiles, &base, &cfg)?;
    }
    log::info!(
        "evaluated {} tiles: pq {:.4}",
        tiles.len(),
        agg.overall.pq.value
    );
    let compared = a.paired.as_ref().map(|p| p.display().to_string());
    let report = EvalReport::new(&cfg, agg, &tiles, compared);
    io::write_report(&report, &a.out, format)
}

fn point_request(sets: &[AnnotationSet]) -> TileRequest {
    let first = &sets[0];
    TileRequest {
        tile_id: first.tile_id.clone(),
        width: first.width,
        height: first.height,
        points: sets
            .iter()
            .flat_map(|s| s.nuclei.iter())
            .filter(|n| n.contour.is_none())
            .map(|n| (n.x, n.y))
            .collect(),
    }
}

fn cmd_consensus(a: ConsensusArgs) -> Result<()> {
    let params = ConsensusParams {
        iou_threshold: a.iou,
        min_raters: a.min_raters,
        stub_radius: a.stub_radius,
    };
    params.validate()?;
    let mut sets = a
        .raters
        .iter()
        .map(|p| io::read_annotations(p))
        .collect::<Result<Vec<_>>>()?;
    sets.sort_by(|x, y| x.rater_id.cmp(&y.rater_id));
    if sets.len() < 2 {
        return Err(Error::invalid(format!(
            "consensus needs at least 2 rater files, got {}",
            sets.len()
        )));
    }
    let first = sets[0].clone();
    if let Some(s) = sets
        .iter()
        .find(|s| (&s.tile_id, s.width, s.height) != (&first.tile_id, first.width, first.height))
    {
        return Err(Error::invalid(format!(
            "raters disagree on the tile: {} has {} ({}x{}), {} has {} ({}x{})",
            first.rater_id,
            first.tile_id,
            first.width,
            first.height,
            s.rater_id,
            s.tile_id,
            s.width,
            s.height
        )));
    }

    let disk = params.disk_provider();
    let points_req = PointsRequest::new("points", vec![point_request(&sets)]);
    let expand_with: Box<dyn ContourProvider> = match (&a.provider_response, &a.provider_request) {
        (None, Some(req)) => {
            io::write_request(&points_req, req)?;
            log::info!(
                "wrote {} point(s) to {}",
                points_req.tiles[0].points.len(),
                req.display()
            );
            return Ok(());
        }
        (None, None) => Box::new(disk),
        (Some(dir), _) => Box::new(io::read_response(dir, &points_req)?),
    };
    let expanded = sets
        .iter()
        .map(|s| expand_contours(s, expand_with.as_ref()))
        .collect::<Result<Vec<_>>>()?;
    for e in expanded.iter().filter(|e| e.failures > 0) {
        log::warn!(
            "rater {}: {} nucleus/nuclei without a mask were dropped",
            e.rater_id,
            e.failures
        );
    }
    let clusters = cluster_annotations(&expanded, &params)?;

    let centroid_with: Box<dyn ContourProvider> = match &a.provider_response {
        None => Box::new(disk),
        Some(dir) => {
            let req = PointsRequest::new(
                "centroids",
                vec![TileRequest {
                    tile_id: first.tile_id.clone(),
                    width: first.width,
                    height: first.height,
                    points: clusters
                        .clusters
                        .iter()
                        .filter(|c| c.raters().len() >= params.min_raters)
                        .map(cluster_centroid)
                        .collect(),
                }],
            );
            let have = io::response_path(dir, &first.tile_id, "centroids").exists();
            match (&a.provider_request, have) {
                (Some(path), false) => {
                    io::write_request(&req, path)?;
                    log::info!(
                        "wrote {} centroid(s) to {}",
                        req.tiles[0].points.len(),
                        path.display()
                    );
                    return Ok(());
                }
                _ => Box::new(io::read_response(dir, &req)?),
            }
        }
    };
    let nuclei = vote_consensus(&clusters, &params, centroid_with.as_ref())?;
    let (map, ids) = consensus_instances(&nuclei, first.height, first.width)?;
    let lost = ids.iter().filter(|i| i.is_none()).count();
    if lost > 0 {
        log::warn!("{lost} consensus nucleus/nuclei fully covered by earlier ones were dropped");
    }
    let extra: io::InstanceExtras = nuclei
        .iter()
        .zip(&ids)
        .filter_map(|(n, id)| {
            id.map(|id| {
                (
                    id,
                    (
                        Some(n.centroid),
                        n.supporting_raters.iter().cloned().collect(),
                    ),
                )
            })
        })
        .collect();
    let tile = TypedTile {
        tile_id: first.tile_id.clone(),
        meta: a.meta.into_iter().collect(),
        map,
    };
    let tensor = a.out.with_extension("nuct");
    io::write_tensor(&io::Tensor::from_instance_map(tile.map.map()), &tensor)?;
    io::write_sidecar(
        &io::sidecar_for(&tile, Some(&extra)),
        &a.out.with_extension("json"),
    )?;
    log::info!("{}: {} consensus nuclei", tile.tile_id, tile.map.len());
    Ok(())
}

#[derive(Serialize)]
struct SelectionReport<'a> {
    schema: &'static str,
    tool_version: &'static str,
    strategy: Strategy,
    config: &'a SelectionConfig,
    pool_size: usize,
    candidates: usize,
    slide_weights: BTreeMap<String, BTreeMap<String, f64>>,
    selected: Vec<Candidate>,
}

fn cmd_select(a: SelectArgs) -> Result<()> {
    let cfg = SelectionConfig {
        k_diversity: a.k,
        top_per_slide_per_type: a.top,
        prob_floor: a.prob_floor,
        bald_percentile: a.percentile,
        uncertainty_k_range: a.k_range,
        n_per_indication: a.n,
        weight_clip: a.clip,
        seed: a.seed,
    };
    cfg.validate()?;
    let (pool, scores) = io::read_feature_pool(&a.features, &a.meta)?;
    let candidates = match a.strategy {
        Strategy::Diversity => diversity_pool(&pool, &cfg).map_err(|e| in_file(&a.features, e))?,
        Strategy::Rare => {
            if scores.iter().all(BTreeMap::is_empty) {
                return Err(in_file(
                    &a.meta,
                    Error::invalid("rare strategy needs per-type scores"),
                ));
            }
            let div = diversity_pool(&pool, &cfg).map_err(|e| in_file(&a.features, e))?;
            let rare = enrich_rare(&pool, &scores, &cfg)?;
            merge_pools(&[&div, &rare])
        }
        Strategy::Uncertainty => {
            let path = a
                .probs
                .as_ref()
                .ok_or_else(|| Error::invalid("uncertainty strategy needs --probs"))?;
            let probs = io::read_member_probs(path, pool.len())?;
            let u = probs
                .iter()
                .map(|p| ensemble_uncertainty(p))
                .collect::<Result<Vec<_>>>()
                .map_err(|e| in_file(path, e))?;
            uncertainty_pool(&pool, &u, &cfg).map_err(|e| in_file(&a.features, e))?
        }
    };
    let selected = sample_weighted(&candidates, &cfg, cfg.seed)?;
    log::info!(
        "{} candidates, {} selected",
        candidates.len(),
        selected.len()
    );
    let report = SelectionReport {
        schema: "tile-selection/1",
        tool_version: crate::VERSION,
        strategy: a.strategy,
        config: &cfg,
        pool_size: pool.len(),
        candidates: candidates.len(),
        slide_weights: slide_weights(&candidates, cfg.weight_clip),
        selected,
    };
    write_json(&report, &a.out)
}

fn cmd_report(a: ReportArgs) -> Result<()> {
    let format: ReportFormat = a.format.parse()?;
    let r = io::read_report(&a.input)?;
    io::write_report(&r, &a.out, format)
}
