mod common;

use std::collections::BTreeMap;
use std::path::Path;
use std::process::{Command, Output};

use common::*;
use nuclei_kit::io::{
    read_report, read_request, read_typed_tile, response_path, write_annotations, write_tensor,
    write_typed_tile, FeatureMeta, FeatureRow, Tensor, TensorData, TypedTile,
};
use nuclei_kit::postprocess::synthesize_hv;
use nuclei_kit::{AnnotatedNucleus, AnnotationSet, CellType, Grid, Mask, TypedInstanceMap};
use rand::Rng as _;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nuclei-kit"))
        .args(args)
        .env_remove("NUCLEI_KIT_WORKERS")
        .output()
        .unwrap()
}

fn ok(args: &[&str]) {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn write_maps(dir: &Path, gt: &TypedInstanceMap) {
    let out = synthesize_hv(gt);
    write_tensor(&Tensor::from_grid_f32(out.np()), &dir.join("np.nuct")).unwrap();
    write_tensor(
        &Tensor::from_planes_f32(&[out.h(), out.v()]).unwrap(),
        &dir.join("hv.nuct"),
    )
    .unwrap();
    let nt: Vec<&Grid<f32>> = out.nt().iter().collect();
    write_tensor(&Tensor::from_planes_f32(&nt).unwrap(), &dir.join("nt.nuct")).unwrap();
}

#[test]
fn postprocess_recovers_ideal_maps() {
    let dir = tempfile::tempdir().unwrap();
    let gt = separated_tile(&mut gen(21), 128, 128, 12);
    write_maps(dir.path(), &gt);
    let d = dir.path();
    let out = d.join("tile-7.nuct");
    ok(&[
        "postprocess",
        "--np",
        p(&d.join("np.nuct")),
        "--hv",
        p(&d.join("hv.nuct")),
        "--nt",
        p(&d.join("nt.nuct")),
        "--out",
        p(&out),
    ]);
    let got = read_typed_tile(&out).unwrap();
    assert_eq!(got.tile_id, "tile-7");
    assert_eq!(got.map, gt.canonicalize());
}

fn eval_fixture(root: &Path, tiles: usize) {
    let gt_dir = root.join("gt");
    let pred_dir = root.join("pred");
    std::fs::create_dir_all(&gt_dir).unwrap();
    std::fs::create_dir_all(&pred_dir).unwrap();
    let mut g = gen(22);
    let palette = [
        CellType::CancerCell,
        CellType::Lymphocyte,
        CellType::Fibroblast,
    ];
    for i in 0..tiles {
        let count = g.gen_range(5..15);
        let gt_map = separated_tile(&mut g, 96, 96, count).map().clone();
        let pred_map = perturb(&mut g, &gt_map);
        let gt = with_random_types(&mut g, gt_map, &palette);
        let pred = with_random_types(&mut g, pred_map, &palette);
        let meta: BTreeMap<String, String> = [(
            "indication".to_string(),
            ["lung", "colon"][i % 2].to_string(),
        )]
        .into();
        let id = format!("t{i:02}");
        write_typed_tile(
            &TypedTile {
                tile_id: id.clone(),
                meta: meta.clone(),
                map: gt.clone(),
            },
            &gt_dir.join(format!("{id}.nuct")),
        )
        .unwrap();
        write_typed_tile(
            &TypedTile {
                tile_id: id.clone(),
                meta,
                map: pred,
            },
            &pred_dir.join(format!("{id}.nuct")),
        )
        .unwrap();
    }
}

#[test]
fn eval_of_ground_truth_against_itself_is_perfect() {
    let dir = tempfile::tempdir().unwrap();
    eval_fixture(dir.path(), 6);
    let gt = dir.path().join("gt");
    let out = dir.path().join("self.json");
    ok(&[
        "eval",
        "--gt",
        p(&gt),
        "--pred",
        p(&gt),
        "--out",
        p(&out),
        "--bootstrap",
        "200",
    ]);
    let r = read_report(&out).unwrap();
    assert_eq!(r.overall.pq.value, 1.0);
    assert_eq!(r.overall.dq.value, 1.0);
    assert_eq!(r.overall.pq.ci_lo, Some(1.0));
    assert_eq!(r.overall.pq.ci_hi, Some(1.0));
    assert_eq!(r.seed, Some(111));
    assert_eq!(r.tool_version, nuclei_kit::VERSION);
    for e in r.overall.f1.values() {
        assert_eq!(e.value, 1.0);
    }
}

#[test]
fn eval_reports_are_identical_across_runs_and_workers() {
    let dir = tempfile::tempdir().unwrap();
    eval_fixture(dir.path(), 10);
    let (gt, pred) = (dir.path().join("gt"), dir.path().join("pred"));
    let mut texts = Vec::new();
    for (i, workers) in ["1", "4", "4"].iter().enumerate() {
        let out = dir.path().join(format!("r{i}.json"));
        ok(&[
            "--workers",
            workers,
            "eval",
            "--gt",
            p(&gt),
            "--pred",
            p(&pred),
            "--out",
            p(&out),
            "--stratify-by",
            "indication",
            "--paired",
            p(&gt),
        ]);
        texts.push(std::fs::read(&out).unwrap());
    }
    assert_eq!(texts[0], texts[1]);
    assert_eq!(texts[1], texts[2]);
    let r = read_report(&dir.path().join("r0.json")).unwrap();
    assert_eq!(r.strata.len(), 2);
    assert_eq!(r.overall.tp, r.strata.iter().map(|s| s.tp).sum::<u64>());
    assert!(r.overall.pq.p_value.is_some());

    let csv = dir.path().join("r0.csv");
    ok(&[
        "report",
        "--in",
        p(&dir.path().join("r0.json")),
        "--format",
        "csv",
        "--out",
        p(&csv),
    ]);
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("stratum,metric,class,value,ci_lo,ci_hi,n_tiles"));
    assert!(text.lines().any(|l| l.starts_with("all,pq,all,")));
}

fn rater(dir: &Path, id: &str, points: &[(f64, f64, CellType)]) -> String {
    let set = AnnotationSet {
        rater_id: id.into(),
        tile_id: "tile-3".into(),
        width: 64,
        height: 64,
        magnification: 40,
        nuclei: points
            .iter()
            .map(|&(x, y, t)| AnnotatedNucleus::point(x, y, t))
            .collect(),
    };
    let path = dir.join(format!("{id}.json"));
    write_annotations(&set, &path).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn consensus_with_built_in_disks() {
    use CellType::{Lymphocyte as L, Plasmocyte as P};
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let a = rater(d, "a", &[(20.0, 20.0, L), (50.0, 12.0, L)]);
    let b = rater(d, "b", &[(21.0, 20.0, L), (50.0, 50.0, P)]);
    let c = rater(d, "c", &[(20.0, 21.0, P)]);
    let out = d.join("consensus.json");
    ok(&[
        "consensus",
        "--raters",
        &a,
        &b,
        &c,
        "--out",
        p(&out),
        "--meta",
        "indication=lung",
    ]);
    let tile = read_typed_tile(&out.with_extension("nuct")).unwrap();
    assert_eq!(tile.meta["indication"], "lung");
    assert_eq!(tile.map.len(), 1);
    assert_eq!(tile.map.instances()[0].labels, vec![L]);
    let side: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(
        side["instances"][0]["raters"],
        serde_json::json!(["a", "b", "c"])
    );
}

/// Radius-6 disk masks answering a request, one plane per point.
fn answer(req_path: &Path, dir: &Path, stage: &str) {
    let req = read_request(req_path).unwrap();
    let t = &req.tiles[0];
    let masks: Vec<Mask> = t
        .points
        .iter()
        .map(|&(x, y)| {
            Mask::from_fn(t.height, t.width, |r, c| {
                let (dy, dx) = (r as f64 + 0.5 - y, c as f64 + 0.5 - x);
                dx * dx + dy * dy <= 36.0
            })
        })
        .collect();
    write_tensor(
        &Tensor::from_masks(&masks, t.height, t.width).unwrap(),
        &response_path(dir, &t.tile_id, stage),
    )
    .unwrap();
}

#[test]
fn consensus_through_the_exchange_files() {
    use CellType::Lymphocyte as L;
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let a = rater(d, "a", &[(20.0, 20.0, L), (44.0, 44.0, L)]);
    let b = rater(d, "b", &[(21.0, 21.0, L), (45.0, 44.0, L)]);
    let req = d.join("request.json");
    let resp = d.join("responses");
    std::fs::create_dir_all(&resp).unwrap();
    let out = d.join("consensus.json");

    ok(&[
        "consensus",
        "--raters",
        &a,
        &b,
        "--out",
        p(&out),
        "--provider-request",
        p(&req),
    ]);
    assert_eq!(read_request(&req).unwrap().tiles[0].points.len(), 4);
    assert!(!out.exists());
    answer(&req, &resp, "points");

    ok(&[
        "consensus",
        "--raters",
        &a,
        &b,
        "--out",
        p(&out),
        "--provider-request",
        p(&req),
        "--provider-response",
        p(&resp),
    ]);
    let second = read_request(&req).unwrap();
    assert_eq!(second.stage, "centroids");
    let mut centroids = second.tiles[0].points.clone();
    centroids.sort_by(|a, b| a.partial_cmp(b).unwrap());
    assert_eq!(centroids, vec![(20.5, 20.5), (44.5, 44.0)]);
    assert!(!out.exists());
    answer(&req, &resp, "centroids");

    ok(&[
        "consensus",
        "--raters",
        &a,
        &b,
        "--out",
        p(&out),
        "--provider-response",
        p(&resp),
    ]);
    let tile = read_typed_tile(&out.with_extension("nuct")).unwrap();
    assert_eq!(tile.map.len(), 2);
}

fn select_fixture(dir: &Path) -> (String, String, String) {
    let mut g = gen(23);
    let (n, d) = (120, 4);
    let data: Vec<f32> = (0..n * d).map(|_| g.gen_range(-1.0..1.0)).collect();
    let feats = dir.join("features.nuct");
    write_tensor(
        &Tensor::new(vec![n as u32, d as u32], TensorData::F32(data)).unwrap(),
        &feats,
    )
    .unwrap();
    let tiles = (0..n)
        .map(|i| FeatureRow {
            tile_id: format!("t{i:03}"),
            slide_id: format!("s{}", i % 4),
            cohort_id: ["lung", "colon"][i % 2].into(),
            x: i as f64,
            y: 0.0,
            scores: [
                (CellType::MitoticFigure, g.gen_range(0.0..1.0)),
                (CellType::Eosinophil, g.gen_range(0.0..1.0)),
            ]
            .into(),
        })
        .collect();
    let meta = dir.join("meta.json");
    std::fs::write(
        &meta,
        serde_json::to_string(&FeatureMeta {
            schema: "tile-features/1".into(),
            tiles,
        })
        .unwrap(),
    )
    .unwrap();
    let probs: Vec<f32> = (0..n * 5).map(|_| g.gen_range(0.0..1.0)).collect();
    let pr = dir.join("probs.nuct");
    write_tensor(
        &Tensor::new(vec![n as u32, 5], TensorData::F32(probs)).unwrap(),
        &pr,
    )
    .unwrap();
    (p(&feats).into(), p(&meta).into(), p(&pr).into())
}

#[test]
fn select_runs_every_strategy() {
    let dir = tempfile::tempdir().unwrap();
    let (feats, meta, probs) = select_fixture(dir.path());
    for strategy in ["diversity", "rare", "uncertainty"] {
        let out = dir.path().join(format!("{strategy}.json"));
        ok(&[
            "select",
            "--features",
            &feats,
            "--meta",
            &meta,
            "--strategy",
            strategy,
            "--out",
            p(&out),
            "--probs",
            &probs,
            "--k",
            "5",
            "--n",
            "8",
        ]);
        let v: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
        assert_eq!(v["schema"], "tile-selection/1");
        assert_eq!(v["strategy"], strategy);
        let selected = v["selected"].as_array().unwrap();
        assert!(!selected.is_empty() && selected.len() <= 16);
        let again = dir.path().join("again.json");
        ok(&[
            "--workers",
            "2",
            "select",
            "--features",
            &feats,
            "--meta",
            &meta,
            "--strategy",
            strategy,
            "--out",
            p(&again),
            "--probs",
            &probs,
            "--k",
            "5",
            "--n",
            "8",
        ]);
        assert_eq!(std::fs::read(&out).unwrap(), std::fs::read(&again).unwrap());
    }
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let missing = d.join("nope.nuct");
    let out = run(&[
        "postprocess",
        "--np",
        p(&missing),
        "--hv",
        p(&missing),
        "--nt",
        p(&missing),
        "--out",
        p(&d.join("o.nuct")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());

    assert_eq!(run(&["eval", "--bogus"]).status.code(), Some(1));
    eval_fixture(d, 2);
    let gt = d.join("gt");
    let bad_mode = run(&[
        "eval",
        "--gt",
        p(&gt),
        "--pred",
        p(&gt),
        "--out",
        p(&d.join("r.json")),
        "--match",
        "nearest",
    ]);
    assert_eq!(bad_mode.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&bad_mode.stderr).contains("nearest"));
    assert_eq!(
        run(&[
            "--workers",
            "0",
            "eval",
            "--gt",
            p(&gt),
            "--pred",
            p(&gt),
            "--out",
            p(&d.join("r.json"))
        ])
        .status
        .code(),
        Some(1)
    );

    let mut garbage = std::fs::read(gt.join("t00.nuct")).unwrap();
    garbage[0] = b'X';
    let broken = d.join("broken");
    std::fs::create_dir_all(&broken).unwrap();
    std::fs::write(broken.join("t00.nuct"), garbage).unwrap();
    std::fs::copy(gt.join("t00.json"), broken.join("t00.json")).unwrap();
    std::fs::copy(gt.join("t01.nuct"), broken.join("t01.nuct")).unwrap();
    std::fs::copy(gt.join("t01.json"), broken.join("t01.json")).unwrap();
    let schema = run(&[
        "eval",
        "--gt",
        p(&broken),
        "--pred",
        p(&gt),
        "--out",
        p(&d.join("r.json")),
    ]);
    assert_eq!(schema.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&schema.stderr).contains("t00.nuct"));

    assert_eq!(run(&["--help"]).status.code(), Some(0));
    assert_eq!(run(&["--version"]).status.code(), Some(0));
}
