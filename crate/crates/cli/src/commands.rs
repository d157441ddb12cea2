use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use anyhow::{bail, Context, Result};
use image::{Rgb, RgbImage};
use omniflow::distortion::{build_cube_density, cube_to_equirect_density, default_density_map, DensityBins, DensityMap};
use omniflow::io::{
    decode_flo, encode_density_png16, encode_density_raw, encode_flo, encode_frame_png, index_dataset, load_frame,
    read_density_raw, read_flo,
};
use omniflow::metrics::{MetricAccumulator, MetricReport};
use omniflow::siamese::{AugmentationSampler, Strategy};
use omniflow::stats::{corpus_statistics, Histogram, StatsReport};
use omniflow::synth::{synthetic_video, write_video, DeadLeavesConfig};
use omniflow::warp::{build_warp_map, warp_flow, warp_image};
use omniflow::sphere::rotation_from_euler;
use omniflow::{Error, FlowField};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::util::{list_files, read_file, sha256_hex, write_atomic, write_json, TOOL};
use crate::{AugmentArgs, DistortionArgs, EvalArgs, Kind, PackKind, SamplePackArgs, StatsArgs, WarpArgs};

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Error::InvalidArgument(msg.into()).into()
}

pub fn warp(a: &WarpArgs) -> Result<()> {
    let kind = match a.kind {
        Some(k) => k,
        None => match a.input.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
            Some("png") => Kind::Image,
            Some("flo") => Kind::Flow,
            _ => return Err(usage("cannot infer --kind from the input extension")),
        },
    };
    let mut r = rotation_from_euler(a.pitch, a.roll, a.yaw)?;
    if a.inverse {
        r = r.inverse();
    }
    let bytes = match kind {
        Kind::Image => {
            let img = load_frame(&a.input)?;
            let map = build_warp_map(&r, img.width(), img.height())?;
            encode_frame_png(&warp_image(&img, &map, a.interp.into())?)?
        }
        Kind::Flow => {
            let f = read_flo(&a.input)?;
            let map = build_warp_map(&r, f.width(), f.height())?;
            encode_flo(&warp_flow(&f, &map, a.interp.into())?)
        }
    };
    write_atomic(&a.output, &bytes)
}

fn parse_bins(spec: &str) -> Result<DensityBins> {
    let spec = spec.trim();
    if let Ok(n) = spec.parse::<usize>() {
        return Ok(DensityBins::uniform(n)?);
    }
    let edges = spec
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| usage(format!("bad bin edge `{t}`"))))
        .collect::<Result<Vec<_>>>()?;
    Ok(DensityBins::new(edges)?)
}

enum DensitySource {
    Auto,
    Disabled,
    File(DensityMap),
}

#[derive(Serialize)]
struct EvalInput {
    name: String,
    pred_sha256: String,
    gt_sha256: String,
}

#[derive(Serialize)]
struct FileMetrics {
    name: String,
    #[serde(flatten)]
    metrics: MetricReport,
}

fn csv_cell(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_owned()
    }
}

pub fn eval(a: &EvalArgs) -> Result<()> {
    let pred_names = list_files(&a.pred_dir, "flo")?;
    let gt_names = list_files(&a.gt_dir, "flo")?;
    let (pred_set, gt_set): (BTreeSet<_>, BTreeSet<_>) = (pred_names.iter().collect(), gt_names.iter().collect());
    let matched: Vec<String> = pred_set.intersection(&gt_set).map(|s| (*s).clone()).collect();
    let unmatched: Vec<String> = pred_set.symmetric_difference(&gt_set).map(|s| (*s).clone()).collect();
    for name in &unmatched {
        let side = if pred_set.contains(name) { "prediction" } else { "ground truth" };
        log::warn!("skipping {name}: {side} has no counterpart");
    }
    if matched.is_empty() {
        return Err(Error::EmptyInput("no flow file is present in both directories".into()).into());
    }
    let source = match a.density.as_str() {
        "auto" => DensitySource::Auto,
        "none" => DensitySource::Disabled,
        path => DensitySource::File(read_density_raw(path)?),
    };
    let bins = match source {
        DensitySource::Disabled => None,
        _ => Some(parse_bins(&a.bins)?),
    };

    let loaded = matched
        .par_iter()
        .map(|name| -> Result<(EvalInput, FlowField, FlowField)> {
            let (pp, gp) = (a.pred_dir.join(name), a.gt_dir.join(name));
            let (pb, gb) = (read_file(&pp)?, read_file(&gp)?);
            let input = EvalInput { name: name.clone(), pred_sha256: sha256_hex(&pb), gt_sha256: sha256_hex(&gb) };
            Ok((input, decode_flo(&pb, &pp)?, decode_flo(&gb, &gp)?))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut densities: BTreeMap<(usize, usize), DensityMap> = BTreeMap::new();
    if let DensitySource::Auto = source {
        for (_, _, gt) in &loaded {
            let key = (gt.width(), gt.height());
            if !densities.contains_key(&key) {
                densities.insert(key, default_density_map(key.0, key.1)?);
            }
        }
    }
    let density_for = |gt: &FlowField| -> Option<&DensityMap> {
        match &source {
            DensitySource::Auto => densities.get(&(gt.width(), gt.height())),
            DensitySource::Disabled => None,
            DensitySource::File(d) => Some(d),
        }
    };
    let weighted = bins.is_some();
    let per_file = loaded
        .par_iter()
        .map(|(input, pred, gt)| -> Result<MetricAccumulator> {
            let mut acc = MetricAccumulator::new(weighted, bins.clone());
            acc.add(pred, gt, density_for(gt), None).with_context(|| format!("evaluating {}", input.name))?;
            Ok(acc)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut total = MetricAccumulator::new(weighted, bins.clone());
    let mut file_reports = Vec::new();
    for ((input, _, _), acc) in loaded.iter().zip(&per_file) {
        total.merge(acc)?;
        match acc.finish() {
            Ok(m) => file_reports.push(FileMetrics { name: input.name.clone(), metrics: m }),
            Err(Error::EmptyMask) => log::warn!("{} has no valid ground-truth pixels", input.name),
            Err(e) => return Err(e.into()),
        }
    }
    let metrics = total.finish()?;
    let inputs: Vec<EvalInput> = loaded.into_iter().map(|(i, _, _)| i).collect();

    let mut csv = format!("scope,{}\n", metrics.csv_header());
    csv.push_str(&format!("all,{}\n", metrics.csv_row()));
    for f in &file_reports {
        csv.push_str(&format!("{},{}\n", csv_cell(&f.name), f.metrics.csv_row()));
    }
    let report = json!({
        "tool": TOOL,
        "command": "eval",
        "config": a,
        "inputs": inputs,
        "unmatched": unmatched,
        "warnings": unmatched.len(),
        "metrics": metrics,
        "per_file": file_reports,
    });
    let csv_path = a.csv.clone().unwrap_or_else(|| a.report.with_extension("csv"));
    write_json(&a.report, &report)?;
    write_atomic(&csv_path, csv.as_bytes())
}

#[derive(Serialize)]
struct NamedDigest {
    name: String,
    sha256: String,
}

fn load_frames(root: &Path) -> Result<(Vec<Vec<omniflow::Image>>, Vec<NamedDigest>)> {
    let names = list_files(root, "png")?;
    let loaded = names
        .par_iter()
        .map(|n| -> Result<(NamedDigest, omniflow::Image)> {
            let p = root.join(n);
            let digest = NamedDigest { name: n.clone(), sha256: sha256_hex(&read_file(&p)?) };
            Ok((digest, load_frame(&p)?))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut sequences: BTreeMap<String, Vec<omniflow::Image>> = BTreeMap::new();
    let mut digests = Vec::new();
    for (d, img) in loaded {
        let dir = d.name.rsplit_once('/').map_or(String::new(), |(dir, _)| dir.to_owned());
        sequences.entry(dir).or_default().push(img);
        digests.push(d);
    }
    Ok((sequences.into_values().collect(), digests))
}

fn histogram_csvs(r: &StatsReport) -> Vec<(String, String)> {
    let mut out = vec![
        ("luminance".to_owned(), r.luminance.to_csv()),
        ("spatial_x".to_owned(), r.spatial_x.histogram.to_csv()),
        ("spatial_y".to_owned(), r.spatial_y.histogram.to_csv()),
    ];
    if let Some(t) = &r.temporal {
        out.push(("temporal".into(), t.histogram.to_csv()));
    }
    if let Some(s) = &r.spectrum {
        let mut csv = String::from("frequency,power\n");
        for (f, p) in s.frequencies.iter().zip(&s.power) {
            csv.push_str(&format!("{f},{p}\n"));
        }
        out.push(("spectrum".into(), csv));
    }
    if let Some(f) = &r.flow {
        out.push(("flow_u".into(), f.u_hist.to_csv()));
        out.push(("flow_speed".into(), f.speed_hist.to_csv()));
        out.push(("flow_direction".into(), f.direction_hist.to_csv()));
        out.push(("flow_du_dx".into(), f.du_dx.histogram.to_csv()));
        out.push(("flow_du_dy".into(), f.du_dy.histogram.to_csv()));
        out.push(("flow_dv_dx".into(), f.dv_dx.histogram.to_csv()));
        out.push(("flow_dv_dy".into(), f.dv_dy.histogram.to_csv()));
    }
    out
}

const PLOT_W: u32 = 640;
const PLOT_H: u32 = 360;
const MARGIN: u32 = 24;

/// Polyline of `ys` against `xs` (both already in plot units), autoscaled.
fn render_curve(xs: &[f64], ys: &[f64]) -> RgbImage {
    let mut img = RgbImage::from_pixel(PLOT_W, PLOT_H, Rgb([255, 255, 255]));
    let axis = Rgb([90, 90, 90]);
    for x in MARGIN..PLOT_W - MARGIN {
        img.put_pixel(x, PLOT_H - MARGIN, axis);
    }
    for y in MARGIN..=PLOT_H - MARGIN {
        img.put_pixel(MARGIN, y, axis);
    }
    let pts: Vec<(f64, f64)> = xs.iter().zip(ys).filter(|(x, y)| x.is_finite() && y.is_finite()).map(|(&x, &y)| (x, y)).collect();
    if pts.len() < 2 {
        return img;
    }
    let (x0, x1) = pts.iter().fold((f64::MAX, f64::MIN), |(a, b), p| (a.min(p.0), b.max(p.0)));
    let (y0, y1) = pts.iter().fold((f64::MAX, f64::MIN), |(a, b), p| (a.min(p.1), b.max(p.1)));
    let (sx, sy) = ((x1 - x0).max(1e-12), (y1 - y0).max(1e-12));
    let span_w = (PLOT_W - 2 * MARGIN - 1) as f64;
    let span_h = (PLOT_H - 2 * MARGIN - 1) as f64;
    let to_px = |(x, y): (f64, f64)| {
        (MARGIN as f64 + 1.0 + (x - x0) / sx * span_w, (PLOT_H - MARGIN) as f64 - 1.0 - (y - y0) / sy * span_h)
    };
    let ink = Rgb([200, 40, 40]);
    for w in pts.windows(2) {
        let (a, b) = (to_px(w[0]), to_px(w[1]));
        let steps = ((b.0 - a.0).abs().max((b.1 - a.1).abs()).ceil() as usize).max(1);
        for s in 0..=steps {
            let t = s as f64 / steps as f64;
            let (x, y) = (a.0 + t * (b.0 - a.0), a.1 + t * (b.1 - a.1));
            img.put_pixel(x.round() as u32, y.round() as u32, ink);
        }
    }
    img
}

fn histogram_curve(h: &Histogram) -> RgbImage {
    let centers: Vec<f64> = h.edges.windows(2).map(|e| 0.5 * (e[0] + e[1])).collect();
    let mass: Vec<f64> = h.normalized().iter().map(|&m| (m.max(1e-12)).log10()).collect();
    render_curve(&centers, &mass)
}

fn png_bytes(img: &RgbImage) -> Result<Vec<u8>> {
    let mut out = std::io::Cursor::new(Vec::new());
    img.write_to(&mut out, image::ImageFormat::Png).context("encoding plot")?;
    Ok(out.into_inner())
}

fn stats_plots(r: &StatsReport) -> Vec<(String, RgbImage)> {
    let mut out = vec![
        ("luminance".to_owned(), histogram_curve(&r.luminance)),
        ("spatial_x".to_owned(), histogram_curve(&r.spatial_x.histogram)),
        ("spatial_y".to_owned(), histogram_curve(&r.spatial_y.histogram)),
    ];
    if let Some(t) = &r.temporal {
        out.push(("temporal".into(), histogram_curve(&t.histogram)));
    }
    if let Some(s) = &r.spectrum {
        let lx: Vec<f64> = s.frequencies.iter().map(|f| f.log10()).collect();
        let ly: Vec<f64> = s.power.iter().map(|p| p.max(1e-300).log10()).collect();
        out.push(("spectrum".into(), render_curve(&lx, &ly)));
    }
    if let Some(f) = &r.flow {
        out.push(("flow_u".into(), histogram_curve(&f.u_hist)));
        out.push(("flow_speed".into(), histogram_curve(&f.speed_hist)));
        out.push(("flow_direction".into(), histogram_curve(&f.direction_hist)));
    }
    out
}

pub fn stats(a: &StatsArgs) -> Result<()> {
    let (sequences, frame_digests) = load_frames(&a.frames_dir)?;
    if frame_digests.is_empty() {
        return Err(Error::EmptyInput(format!("no PNG frames under {}", a.frames_dir.display())).into());
    }
    let (flows, flow_digests) = match &a.flows_dir {
        Some(dir) => {
            let names = list_files(dir, "flo")?;
            let loaded = names
                .par_iter()
                .map(|n| -> Result<(NamedDigest, FlowField)> {
                    let p = dir.join(n);
                    let bytes = read_file(&p)?;
                    Ok((NamedDigest { name: n.clone(), sha256: sha256_hex(&bytes) }, decode_flo(&bytes, &p)?))
                })
                .collect::<Result<Vec<_>>>()?;
            let (d, f): (Vec<_>, Vec<_>) = loaded.into_iter().unzip();
            (f, d)
        }
        None => (Vec::new(), Vec::new()),
    };
    let report = corpus_statistics(&sequences, &flows)?;
    let doc = json!({
        "tool": TOOL,
        "command": "stats",
        "config": a,
        "inputs": { "frames": frame_digests, "flows": flow_digests },
        "report": report,
    });
    if let Some(dir) = &a.csv_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::Io { path: dir.clone(), source: e })?;
        for (name, csv) in histogram_csvs(&report) {
            write_atomic(&dir.join(format!("{name}.csv")), csv.as_bytes())?;
        }
    }
    if let Some(dir) = &a.plots {
        std::fs::create_dir_all(dir).map_err(|e| Error::Io { path: dir.clone(), source: e })?;
        for (name, img) in stats_plots(&report) {
            write_atomic(&dir.join(format!("{name}.png")), &png_bytes(&img)?)?;
        }
    }
    write_json(&a.report, &doc)
}

pub fn distortion_map(a: &DistortionArgs) -> Result<()> {
    if a.out_img.is_none() && a.out_raw.is_none() {
        return Err(usage("nothing to do: pass --out-img and/or --out-raw"));
    }
    let faces = build_cube_density(a.face_size)?;
    let d = cube_to_equirect_density(&faces, a.width, a.height)?;
    let png = a.out_img.as_ref().map(|_| encode_density_png16(&d)).transpose()?;
    if let (Some(p), Some(bytes)) = (&a.out_img, &png) {
        write_atomic(p, bytes)?;
    }
    if let Some(p) = &a.out_raw {
        write_atomic(p, &encode_density_raw(&d))?;
    }
    log::info!("density range [{}, {}]", d.min(), d.max());
    Ok(())
}

#[derive(Serialize)]
struct Angles {
    pitch: f64,
    roll: f64,
    yaw: f64,
}

impl From<omniflow::EulerAngles> for Angles {
    fn from(e: omniflow::EulerAngles) -> Self {
        Self { pitch: e.pitch, roll: e.roll, yaw: e.yaw }
    }
}

#[derive(Serialize)]
struct ManifestEntry {
    index: u64,
    epoch: usize,
    sample: String,
    rotated: &'static str,
    left: Angles,
    right: Angles,
}

pub fn augment_pairs(a: &AugmentArgs) -> Result<()> {
    let strategy: Strategy = a.strategy.parse()?;
    let index = index_dataset(&a.dataset)?;
    if index.is_empty() {
        return Err(Error::EmptyInput(format!("no samples under {}", a.dataset.display())).into());
    }
    if a.epochs == 0 {
        bail!(usage("--epochs must be at least 1"));
    }
    let sampler = AugmentationSampler::new(strategy, a.seed);
    let n = index.len();
    let mut entries = Vec::with_capacity(n * a.epochs);
    for epoch in 0..a.epochs {
        for (i, s) in index.samples.iter().enumerate() {
            let k = (epoch * n + i) as u64;
            let pair = sampler.sample(k);
            entries.push(ManifestEntry {
                index: k,
                epoch,
                sample: format!("{}/{}", s.video, s.stem),
                rotated: if pair.left_is_identity() { "right" } else { "left" },
                left: pair.left.into(),
                right: pair.right.into(),
            });
        }
    }
    let listing: String = index.samples.iter().map(|s| format!("{}/{}\n", s.video, s.stem)).collect();
    let doc = json!({
        "tool": TOOL,
        "command": "augment-pairs",
        "config": a,
        "dataset": { "samples": n, "split": index.split, "listing_sha256": sha256_hex(listing.as_bytes()) },
        "pairs": entries,
    });
    write_json(&a.out_manifest, &doc)
}

pub fn sample_pack(a: &SamplePackArgs) -> Result<()> {
    let parent = match a.out.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => std::path::PathBuf::from("."),
    };
    let staging = tempfile::Builder::new()
        .prefix(".sample-pack")
        .tempdir_in(&parent)
        .with_context(|| format!("cannot stage output in {}", parent.display()))?;
    let cfg = DeadLeavesConfig::default();
    match a.kind {
        PackKind::Mini => {
            for v in 0..4u64 {
                let video = synthetic_video(a.seed.wrapping_mul(1000).wrapping_add(v), 8, 64, 32, &cfg)?;
                write_video(staging.path().join(format!("video_{v:02}")), &video)?;
            }
        }
        PackKind::Stats => {
            let video = synthetic_video(a.seed, 8, 512, 256, &cfg)?;
            let (frames, flows) = (staging.path().join("frames"), staging.path().join("flows"));
            for dir in [&frames, &flows] {
                std::fs::create_dir_all(dir).map_err(|e| Error::Io { path: dir.clone(), source: e })?;
            }
            for (t, img) in video.frames.iter().enumerate() {
                std::fs::write(frames.join(format!("{t:04}.png")), encode_frame_png(img)?)?;
            }
            // the camera turns at a constant rate, so every forward flow is the same
            std::fs::write(flows.join("0000.flo"), encode_flo(&video.flow_fw[0]))?;
        }
    }
    let staged = staging.keep();
    std::fs::rename(&staged, &a.out).map_err(|e| {
        let _ = std::fs::remove_dir_all(&staged);
        Error::Io { path: a.out.clone(), source: e }
    })?;
    Ok(())
}
