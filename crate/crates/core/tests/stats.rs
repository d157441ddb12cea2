mod common;

use std::path::PathBuf;

use omniflow::io::{load_frame, read_flo};
use omniflow::stats::{
    corpus_statistics, derivative_kurtosis, flow_statistics, luminance_histogram, power_spectrum_slope,
    DerivativeAxis, Moments,
};
use omniflow::{FlowField, Image};
use rand::Rng;
use rand_distr::StandardNormal;

fn stats_pack() -> (Vec<Image>, Vec<FlowField>) {
    let root = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data/stats_pack");
    let frames = (0..8).map(|i| load_frame(root.join(format!("frames/{i:04}.png"))).unwrap()).collect();
    let flows = vec![read_flo(root.join("flows/0000.flo")).unwrap()];
    (frames, flows)
}

#[test]
fn white_noise_spectrum_is_flat() {
    let s = power_spectrum_slope(&common::white_frames(4, 256, 1)).unwrap();
    assert!(s.slope.abs() < 0.15, "{}", s.slope);
    assert_eq!(s.crop_size, 256);
}

#[test]
fn pink_noise_spectrum_has_slope_minus_two() {
    let s = power_spectrum_slope(&common::pink_frames(4, 256, 2)).unwrap();
    assert!((s.slope + 2.0).abs() < 0.15, "{}", s.slope);
}

#[test]
fn spectrum_slope_ignores_contrast() {
    let frames = common::pink_frames(2, 128, 3);
    let scaled: Vec<Image> = frames
        .iter()
        .map(|f| Image::new(128, 128, 1, f.data().iter().map(|x| 0.25 * x).collect()).unwrap())
        .collect();
    let (a, b) = (power_spectrum_slope(&frames).unwrap(), power_spectrum_slope(&scaled).unwrap());
    assert!((a.slope - b.slope).abs() < 1e-9, "{} vs {}", a.slope, b.slope);
}

#[test]
fn gaussian_kurtosis_is_three() {
    let mut rng = common::rng(4);
    let mut m = Moments::default();
    for _ in 0..1_000_000 {
        m.push(rng.sample::<f64, _>(StandardNormal));
    }
    assert!((m.kurtosis().unwrap() - 3.0).abs() < 0.2);
    let mut halves = (Moments::default(), Moments::default());
    let mut rng = common::rng(5);
    for i in 0..10_000 {
        let x: f64 = rng.sample(StandardNormal);
        if i % 2 == 0 { halves.0.push(x) } else { halves.1.push(x) }
    }
    let mut rng = common::rng(5);
    let mut whole = Moments::default();
    for _ in 0..10_000 {
        whole.push(rng.sample(StandardNormal));
    }
    halves.0.merge(&halves.1);
    assert!((halves.0.kurtosis().unwrap() - whole.kurtosis().unwrap()).abs() < 1e-9);
}

#[test]
fn luminance_counts_every_pixel() {
    let frames = common::white_frames(3, 32, 6);
    let h = luminance_histogram(&frames).unwrap();
    assert_eq!(h.total(), 3 * 32 * 32);
    assert_eq!(h.clamped, 0);
    assert!(luminance_histogram(&[]).is_err());
}

#[test]
fn temporal_needs_two_frames() {
    let frames = common::white_frames(1, 32, 7);
    assert!(derivative_kurtosis(&frames, DerivativeAxis::Temporal).is_err());
    let frames = common::white_frames(3, 32, 7);
    let t = derivative_kurtosis(&frames, DerivativeAxis::Temporal).unwrap();
    assert_eq!(t.moments.n, 2 * 32 * 32);
}

#[test]
fn mirrored_flow_mirrors_directions() {
    let f = common::random_flow(64, 32, 10.0, 8);
    let mirrored = FlowField::new(64, 32, f.u().iter().map(|u| -u).collect(), f.v().to_vec()).unwrap();
    let (a, b) = (flow_statistics(&[f]).unwrap(), flow_statistics(&[mirrored]).unwrap());
    let n = a.direction_hist.counts.len();
    assert_eq!(n, 72);
    for k in 0..n {
        assert_eq!(a.direction_hist.counts[k], b.direction_hist.counts[(n + n / 2 - 1 - k) % n], "bin {k}");
    }
    assert_eq!(a.speed_hist, b.speed_hist);
}

#[test]
fn zero_flow_has_undefined_direction() {
    let s = flow_statistics(&[FlowField::zeros(8, 4)]).unwrap();
    assert_eq!(s.undefined_direction, 32);
    assert_eq!(s.direction_hist.total(), 0);
    assert!(flow_statistics(&[]).is_err());
}

#[test]
fn stats_pack_is_natural_looking() {
    let (frames, flows) = stats_pack();
    let report = corpus_statistics(&[frames], &flows).unwrap();
    let slope = report.spectrum.as_ref().unwrap().slope;
    assert!((-2.6..=-2.0).contains(&slope), "{slope}");
    for d in [&report.spatial_x, &report.spatial_y] {
        assert!(d.kurtosis.unwrap() > 10.0);
        let mode = d.histogram.mode_bin();
        let center = 0.5 * (d.histogram.edges[mode] + d.histogram.edges[mode + 1]);
        assert_eq!(center, 0.0);
    }
    assert!(report.temporal.is_some());
    assert_eq!(report.flow.as_ref().unwrap().fields, 1);
}
