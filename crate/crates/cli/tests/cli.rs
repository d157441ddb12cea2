use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use omniflow::io::{read_density_raw, read_flo, save_frame, write_flo};
use omniflow::{FlowField, Image};
use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_omniflow"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).env("RUST_LOG", "error").output().expect("binary runs")
}

fn ok(args: &[&str]) {
    let out = run(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn code(args: &[&str]) -> i32 {
    run(args).status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn mini360() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/data/mini360")
}

fn stats_pack() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/data/stats_pack")
}

fn smooth_flow(w: usize, h: usize) -> FlowField {
    FlowField::from_fn(w, h, |c, r| {
        let x = c as f32 / w as f32 * std::f32::consts::TAU;
        let y = r as f32 / h as f32 * std::f32::consts::PI;
        (2.0 * x.sin() * y.sin(), 1.5 * x.cos() * (2.0 * y).sin())
    })
}

fn test_image(w: usize, h: usize) -> Image {
    Image::from_fn(w, h, 3, |c, r, k| ((c * 37 + r * 11 + k * 80) % 256) as f32)
}

fn read_json(p: &Path) -> Value {
    serde_json::from_slice(&fs::read(p).unwrap()).unwrap()
}

/// Files under `root` with their contents, sorted by relative path.
fn tree(root: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(root).unwrap().to_path_buf(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn identity_warp_preserves_pixels() {
    let dir = tempfile::tempdir().unwrap();
    let (src, dst) = (dir.path().join("in.png"), dir.path().join("out.png"));
    let img = test_image(64, 32);
    save_frame(&img, &src).unwrap();
    ok(&["warp", "--in", s(&src), "--out", s(&dst)]);
    assert_eq!(fs::read(&src).unwrap(), fs::read(&dst).unwrap());
    ok(&["warp", "--in", s(&src), "--out", s(&dst), "--yaw", "0deg", "--interp", "nearest"]);
    assert_eq!(omniflow::io::load_frame(&dst).unwrap(), img);
}

#[test]
fn flow_warp_and_inverse_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let (w, h) = (128, 64);
    let f = smooth_flow(w, h);
    let (a, b, c) = (dir.path().join("a.flo"), dir.path().join("b.flo"), dir.path().join("c.flo"));
    write_flo(&f, &a).unwrap();
    ok(&["warp", "--in", s(&a), "--out", s(&b), "--pitch", "15deg", "--yaw", "-0.6"]);
    ok(&["warp", "--in", s(&b), "--out", s(&c), "--pitch", "15deg", "--yaw", "-0.6", "--inverse"]);
    let back = read_flo(&c).unwrap();
    let (mut sum, mut n) = (0.0f64, 0usize);
    for row in 5..h - 5 {
        for col in 0..w {
            let (p, q) = (f.at(col, row), back.at(col, row));
            sum += ((p.0 - q.0) as f64).hypot((p.1 - q.1) as f64);
            n += 1;
        }
    }
    assert!(sum / (n as f64) < 0.05, "{}", sum / n as f64);
}

#[test]
fn every_command_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let img = d.join("img.png");
    save_frame(&test_image(64, 32), &img).unwrap();
    let gt = mini360().join("video_00/flow_fw");
    let pred = mini360().join("video_01/flow_fw");
    for i in 0..2 {
        let o = |name: &str| d.join(format!("{name}{i}"));
        ok(&["warp", "--in", s(&img), "--out", s(&o("w.png")), "--roll", "0.3", "--yaw", "1.1"]);
        ok(&["eval", "--pred-dir", s(&pred), "--gt-dir", s(&gt), "--report", s(&o("e.json")), "--csv", s(&o("e.csv"))]);
        ok(&["stats", "--frames-dir", s(&mini360().join("video_02/frames")), "--flows-dir",
            s(&mini360().join("video_02/flow_fw")), "--report", s(&o("s.json")), "--csv-dir", s(&o("csv")),
            "--plots", s(&o("plots"))]);
        ok(&["distortion-map", "--width", "128", "--height", "64", "--out-img", s(&o("d.png")), "--out-raw",
            s(&o("d.raw"))]);
        ok(&["augment-pairs", "--dataset", s(&mini360()), "--seed", "4", "--epochs", "2", "--out-manifest",
            s(&o("m.json"))]);
        ok(&["sample-pack", "--kind", "mini", "--seed", "2", "--out", s(&o("pack"))]);
    }
    for name in ["w.png", "e.csv", "d.png", "d.raw"] {
        assert_eq!(fs::read(d.join(format!("{name}0"))).unwrap(), fs::read(d.join(format!("{name}1"))).unwrap(), "{name}");
    }
    for name in ["e.json", "s.json", "m.json"] {
        let (mut a, mut b) = (read_json(&d.join(format!("{name}0"))), read_json(&d.join(format!("{name}1"))));
        a["config"] = Value::Null;
        b["config"] = Value::Null;
        assert_eq!(a, b, "{name}");
    }
    for name in ["csv", "plots", "pack"] {
        let (a, b) = (tree(&d.join(format!("{name}0"))), tree(&d.join(format!("{name}1"))));
        assert!(!a.is_empty());
        assert_eq!(a, b, "{name}");
    }
    assert_eq!(omniflow::io::index_dataset(d.join("pack0")).unwrap().len(), 28);
}

#[test]
fn self_evaluation_is_all_zero() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("r.json");
    let flows = mini360().join("video_00/flow_fw");
    ok(&["eval", "--pred-dir", s(&flows), "--gt-dir", s(&flows), "--report", s(&report)]);
    let r = read_json(&report);
    let m = &r["metrics"];
    assert_eq!(m["epe"], 0.0);
    assert_eq!(m["ae"], 0.0);
    assert_eq!(m["epe_d"], 0.0);
    assert_eq!(m["ae_d"], 0.0);
    for b in m["per_speed_bin"].as_array().unwrap() {
        assert!(b["epe"].is_null() || b["epe"] == 0.0);
    }
    assert_eq!(r["per_file"].as_array().unwrap().len(), 7);
    assert!(dir.path().join("r.csv").is_file());
}

#[test]
fn hand_computed_two_file_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let (pred, gt) = (dir.path().join("pred"), dir.path().join("gt"));
    fs::create_dir_all(&pred).unwrap();
    fs::create_dir_all(&gt).unwrap();
    let zero = FlowField::zeros(2, 1);
    write_flo(&FlowField::new(2, 1, vec![3.0, 1.0], vec![4.0, 0.0]).unwrap(), pred.join("a.flo")).unwrap();
    write_flo(&zero, gt.join("a.flo")).unwrap();
    write_flo(&zero, pred.join("b.flo")).unwrap();
    write_flo(&zero, gt.join("b.flo")).unwrap();
    write_flo(&zero, pred.join("only_pred.flo")).unwrap();
    let report = dir.path().join("r.json");
    ok(&["eval", "--pred-dir", s(&pred), "--gt-dir", s(&gt), "--density", "none", "--report", s(&report)]);
    let r = read_json(&report);
    assert_eq!(r["metrics"]["valid_pixels"], 4);
    assert_eq!(r["metrics"]["epe"], 1.5);
    let ae = ((1.0 / 26f64.sqrt()).acos() + (1.0 / 2f64.sqrt()).acos()) / 4.0;
    assert!((r["metrics"]["ae"].as_f64().unwrap() - ae).abs() < 1e-12);
    assert_eq!(r["metrics"]["epe_d"], Value::Null);
    assert_eq!(r["per_file"][0]["name"], "a.flo");
    assert_eq!(r["per_file"][0]["epe"], 3.0);
    assert_eq!(r["unmatched"], serde_json::json!(["only_pred.flo"]));
    assert_eq!(r["warnings"], 1);
}

#[test]
fn eval_report_matches_schema() {
    let schema: Value = serde_json::from_str(include_str!("../../../docs/metric_report.schema.json")).unwrap();
    let validator = jsonschema::validator_for(&schema).unwrap();
    let dir = tempfile::tempdir().unwrap();
    for (density, bins) in [("auto", "5"), ("none", "5"), ("auto", "0.5,0.75,0.9,1.0")] {
        let report = dir.path().join(format!("{density}.json"));
        ok(&["eval", "--pred-dir", s(&mini360().join("video_01/flow_fw")), "--gt-dir",
            s(&mini360().join("video_00/flow_fw")), "--density", density, "--bins", bins, "--report", s(&report)]);
        let doc = read_json(&report);
        let errors: Vec<String> = validator.iter_errors(&doc).map(|e| e.to_string()).collect();
        assert!(errors.is_empty(), "{errors:?}");
    }
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let report = d.join("r.json");
    assert_eq!(code(&["eval"]), 1);
    assert_eq!(code(&["frobnicate"]), 1);
    assert_eq!(code(&["warp", "--in", "x.png", "--out", "y.png", "--yaw", "abc"]), 1);
    assert_eq!(code(&["augment-pairs", "--dataset", s(&mini360()), "--strategy", "v9", "--out-manifest", s(&report)]), 1);

    let missing = d.join("missing");
    assert_eq!(code(&["eval", "--pred-dir", s(&missing), "--gt-dir", s(&missing), "--report", s(&report)]), 2);
    assert_eq!(code(&["warp", "--in", s(&d.join("none.flo")), "--out", s(&d.join("o.flo"))]), 2);

    let (pred, gt) = (d.join("pred"), d.join("gt"));
    fs::create_dir_all(&pred).unwrap();
    fs::create_dir_all(&gt).unwrap();
    assert_eq!(code(&["eval", "--pred-dir", s(&pred), "--gt-dir", s(&gt), "--report", s(&report)]), 4);
    write_flo(&FlowField::zeros(2, 1), pred.join("a.flo")).unwrap();
    write_flo(&FlowField::zeros(2, 1), gt.join("b.flo")).unwrap();
    assert_eq!(code(&["eval", "--pred-dir", s(&pred), "--gt-dir", s(&gt), "--report", s(&report)]), 4);

    fs::write(gt.join("a.flo"), b"not a flow file at all").unwrap();
    assert_eq!(code(&["eval", "--pred-dir", s(&pred), "--gt-dir", s(&gt), "--report", s(&report)]), 3);
    write_flo(&FlowField::zeros(4, 2), gt.join("a.flo")).unwrap();
    assert_eq!(code(&["eval", "--pred-dir", s(&pred), "--gt-dir", s(&gt), "--density", "none", "--report", s(&report)]), 3);
    let odd = d.join("odd.png");
    save_frame(&test_image(30, 20), &odd).unwrap();
    assert_eq!(code(&["warp", "--in", s(&odd), "--out", s(&d.join("o.png")), "--yaw", "0.2"]), 3);
    assert!(!report.exists());
}

#[test]
fn failures_leave_no_partial_output() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let flows = mini360().join("video_00/flow_fw");
    let report = d.join("no/such/dir/r.json");
    assert_eq!(code(&["eval", "--pred-dir", s(&flows), "--gt-dir", s(&flows), "--report", s(&report)]), 2);
    assert!(!d.join("no").exists());
    let out = d.join("pack");
    assert_eq!(code(&["distortion-map", "--out-raw", s(&d.join("nope/x.raw"))]), 2);
    assert_eq!(code(&["sample-pack", "--kind", "mini", "--out", s(&d.join("nope/pack"))]), 2);
    assert!(!out.exists());
    let leftovers: Vec<_> = fs::read_dir(d).unwrap().collect();
    assert!(leftovers.is_empty());
}

#[test]
fn distortion_map_range_and_shape() {
    let dir = tempfile::tempdir().unwrap();
    let raw = dir.path().join("d.raw");
    ok(&["distortion-map", "--width", "256", "--height", "128", "--out-raw", s(&raw), "--out-img",
        s(&dir.path().join("d.png"))]);
    let d = read_density_raw(&raw).unwrap();
    assert_eq!((d.width(), d.height()), (256, 128));
    assert!(d.min() >= 0.5 && d.max() < 1.0);
    assert!(d.values()[128] > d.values()[64 * 256 + 128]);
    let png = image::open(dir.path().join("d.png")).unwrap();
    assert_eq!(png.color(), image::ColorType::L16);
    assert_eq!(code(&["distortion-map"]), 1);
}

#[test]
fn augment_manifest_strategies() {
    let dir = tempfile::tempdir().unwrap();
    let m = dir.path().join("m.json");
    ok(&["augment-pairs", "--dataset", s(&mini360()), "--strategy", "v1", "--out-manifest", s(&m)]);
    let doc = read_json(&m);
    let pairs = doc["pairs"].as_array().unwrap();
    assert_eq!(pairs.len(), 28);
    assert!(pairs.iter().all(|p| p["rotated"] == "right" && p["left"]["yaw"] == 0.0 && p["left"]["pitch"] == 0.0));
    assert_eq!(doc["dataset"]["samples"], 28);

    ok(&["augment-pairs", "--dataset", s(&mini360()), "--strategy", "v2", "--epochs", "100", "--out-manifest", s(&m)]);
    let doc = read_json(&m);
    let pairs = doc["pairs"].as_array().unwrap();
    assert_eq!(pairs.len(), 2800);
    let left = pairs.iter().filter(|p| p["rotated"] == "left").count() as f64 / 2800.0;
    assert!((left - 0.5).abs() < 0.05, "{left}");
    assert_eq!(pairs[29]["index"], 29);
    assert_eq!(pairs[29]["epoch"], 1);
}

#[test]
fn stats_report_on_sample_pack() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("s.json");
    ok(&["stats", "--frames-dir", s(&stats_pack().join("frames")), "--flows-dir", s(&stats_pack().join("flows")),
        "--report", s(&report)]);
    let doc = read_json(&report);
    let slope = doc["report"]["spectrum"]["slope"].as_f64().unwrap();
    assert!((-2.6..=-2.0).contains(&slope), "{slope}");
    assert!(doc["report"]["spatial_x"]["kurtosis"].as_f64().unwrap() > 10.0);
    assert_eq!(doc["report"]["frames"], 8);
}
