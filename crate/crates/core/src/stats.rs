//! Corpus statistics for frames and flow fields: luminance histograms,
//! radially averaged power spectra with a log-log slope fit, derivative
//! distributions with kurtosis, and flow speed/direction distributions.
//!
//! Per-frame results are merged by adding histogram counts and combining
//! central moments, so merging is associative and order-independent up to
//! floating-point rounding of the moments.

use std::f64::consts::PI;

use rayon::prelude::*;
use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{FlowField, Image};

/// Histogram over explicit, strictly increasing edges. Bin `i` is
/// `[edges[i], edges[i+1])`; values outside the range land in the end bins
/// and are also counted in `clamped`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub clamped: u64,
}

impl Histogram {
    pub fn with_edges(edges: Vec<f64>) -> Self {
        debug_assert!(edges.len() >= 2 && edges.windows(2).all(|w| w[0] < w[1]));
        let n = edges.len() - 1;
        Self { edges, counts: vec![0; n], clamped: 0 }
    }

    /// `bins` equal-width bins over `[lo, hi)`.
    pub fn linear(lo: f64, hi: f64, bins: usize) -> Self {
        Self::with_edges((0..=bins).map(|i| lo + (hi - lo) * i as f64 / bins as f64).collect())
    }

    /// Unit-width bins centered on the integers `-half..=half`.
    pub fn symmetric_integer(half: usize) -> Self {
        let h = half as f64;
        Self::linear(-h - 0.5, h + 0.5, 2 * half + 1)
    }

    pub fn push(&mut self, x: f64) {
        let last = self.counts.len() - 1;
        let i = self.edges.partition_point(|&e| e <= x);
        let bin = if i == 0 {
            self.clamped += 1;
            0
        } else if i > last + 1 || (i == last + 1 && x >= self.edges[last + 1]) {
            self.clamped += 1;
            last
        } else {
            i - 1
        };
        self.counts[bin] += 1;
    }

    pub fn merge(&mut self, other: &Histogram) -> Result<()> {
        if self.edges != other.edges {
            return Err(Error::InvalidArgument("cannot merge histograms with different edges".into()));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.clamped += other.clamped;
        Ok(())
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Counts divided by the total (all zeros for an empty histogram).
    pub fn normalized(&self) -> Vec<f64> {
        let t = self.total();
        if t == 0 {
            return vec![0.0; self.counts.len()];
        }
        self.counts.iter().map(|&c| c as f64 / t as f64).collect()
    }

    /// Index of the most populated bin (first on ties).
    pub fn mode_bin(&self) -> usize {
        let max = self.counts.iter().copied().max().unwrap_or(0);
        self.counts.iter().position(|&c| c == max).unwrap_or(0)
    }

    pub fn bin_of(&self, x: f64) -> Option<usize> {
        let i = self.edges.partition_point(|&e| e <= x);
        (i > 0 && i < self.edges.len()).then(|| i - 1)
    }

    /// `lo,hi,count,fraction` lines with a header.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("lo,hi,count,fraction\n");
        for ((e, c), p) in self.edges.windows(2).zip(&self.counts).zip(self.normalized()) {
            s.push_str(&format!("{},{},{},{}\n", e[0], e[1], c, p));
        }
        s
    }
}

/// Running central moments up to order four.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub n: u64,
    pub mean: f64,
    m2: f64,
    m3: f64,
    m4: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        let n1 = self.n as f64;
        self.n += 1;
        let n = self.n as f64;
        let delta = x - self.mean;
        let dn = delta / n;
        let dn2 = dn * dn;
        let t1 = delta * dn * n1;
        self.mean += dn;
        self.m4 += t1 * dn2 * (n * n - 3.0 * n + 3.0) + 6.0 * dn2 * self.m2 - 4.0 * dn * self.m3;
        self.m3 += t1 * dn * (n - 2.0) - 3.0 * dn * self.m2;
        self.m2 += t1;
    }

    pub fn merge(&mut self, o: &Moments) {
        if o.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *o;
            return;
        }
        let (na, nb) = (self.n as f64, o.n as f64);
        let n = na + nb;
        let d = o.mean - self.mean;
        let d2 = d * d;
        let m2 = self.m2 + o.m2 + d2 * na * nb / n;
        let m3 = self.m3 + o.m3 + d * d2 * na * nb * (na - nb) / (n * n) + 3.0 * d * (na * o.m2 - nb * self.m2) / n;
        let m4 = self.m4
            + o.m4
            + d2 * d2 * na * nb * (na * na - na * nb + nb * nb) / (n * n * n)
            + 6.0 * d2 * (na * na * o.m2 + nb * nb * self.m2) / (n * n)
            + 4.0 * d * (na * o.m3 - nb * self.m3) / n;
        *self = Moments { n: self.n + o.n, mean: self.mean + d * nb / n, m2, m3, m4 };
    }

    pub fn variance(&self) -> Option<f64> {
        (self.n > 0).then(|| self.m2 / self.n as f64)
    }

    /// Non-excess kurtosis `m4 / m2^2` (3 for a Gaussian); `None` when the
    /// variance vanishes.
    pub fn kurtosis(&self) -> Option<f64> {
        if self.n == 0 || self.m2 <= 0.0 {
            return None;
        }
        Some(self.n as f64 * self.m4 / (self.m2 * self.m2))
    }
}

fn require_frames(frames: &[Image]) -> Result<()> {
    if frames.is_empty() {
        return Err(Error::EmptyInput("no frames".into()));
    }
    Ok(())
}

/// 256-bin histogram of luma rounded to the nearest integer level.
pub fn luminance_histogram(frames: &[Image]) -> Result<Histogram> {
    require_frames(frames)?;
    let parts: Vec<Histogram> = frames
        .par_iter()
        .map(|f| {
            let mut h = Histogram::linear(-0.5, 255.5, 256);
            for g in f.to_gray() {
                h.push((g as f64).round().clamp(0.0, 255.0));
            }
            h
        })
        .collect();
    let mut total = Histogram::linear(-0.5, 255.5, 256);
    for p in &parts {
        total.merge(p)?;
    }
    Ok(total)
}

/// Side length of the centered square used for spectra: 512 when the frame
/// allows it, otherwise the largest power of two that fits.
pub fn spectrum_crop_size(width: usize, height: usize) -> usize {
    let m = width.min(height);
    if m >= 512 {
        512
    } else if m == 0 {
        0
    } else {
        1 << (usize::BITS - 1 - m.leading_zeros())
    }
}

/// Radially averaged power spectrum and its log-log slope.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumReport {
    pub frames: usize,
    pub crop_size: usize,
    /// Radial frequency in cycles per crop, `1..=crop_size/2`.
    pub frequencies: Vec<f64>,
    pub power: Vec<f64>,
    /// Inclusive fit band `[f_max/64, f_max/4]`, `f_max = crop_size/2`.
    pub fit_band: (f64, f64),
    pub slope: f64,
    pub intercept: f64,
}

fn hann(n: usize) -> Vec<f64> {
    (0..n).map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos()).collect()
}

fn frame_power(frame: &Image, n: usize, window: &[f64], planner: &mut FftPlanner<f64>) -> Vec<f64> {
    let gray = frame.to_gray();
    let (w, h) = (frame.width(), frame.height());
    let (x0, y0) = ((w - n) / 2, (h - n) / 2);
    let crop: Vec<f64> = (0..n)
        .flat_map(|r| (0..n).map(move |c| (r, c)))
        .map(|(r, c)| gray[(y0 + r) * w + x0 + c] as f64)
        .collect();
    let mean = crop.iter().sum::<f64>() / crop.len() as f64;
    let mut buf: Vec<Complex<f64>> = crop
        .iter()
        .enumerate()
        .map(|(i, &x)| Complex::new((x - mean) * window[i / n] * window[i % n], 0.0))
        .collect();
    let fft = planner.plan_fft_forward(n);
    for row in buf.chunks_exact_mut(n) {
        fft.process(row);
    }
    let mut col = vec![Complex::new(0.0, 0.0); n];
    for c in 0..n {
        for r in 0..n {
            col[r] = buf[r * n + c];
        }
        fft.process(&mut col);
        for r in 0..n {
            buf[r * n + c] = col[r];
        }
    }
    let norm: f64 = window.iter().map(|x| x * x).sum::<f64>().powi(2);
    buf.iter().map(|z| z.norm_sqr() / norm).collect()
}

/// Least-squares line `y = slope * x + intercept`.
pub fn fit_line(xs: &[f64], ys: &[f64]) -> Option<(f64, f64)> {
    let n = xs.len() as f64;
    if xs.len() < 2 {
        return None;
    }
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}

/// Mean-subtracted, Hann-windowed 2D power spectrum of the centered crop,
/// averaged across frames and radially, with a log10-log10 line fit over the
/// fit band.
pub fn power_spectrum_slope(frames: &[Image]) -> Result<SpectrumReport> {
    require_frames(frames)?;
    let n = frames.iter().map(|f| spectrum_crop_size(f.width(), f.height())).min().unwrap_or(0);
    if n < 16 {
        return Err(Error::InvalidArgument(format!("frames too small for a spectrum (crop {n})")));
    }
    let window = hann(n);
    let spectra: Vec<Vec<f64>> = frames
        .par_iter()
        .map_init(FftPlanner::new, |planner, f| frame_power(f, n, &window, planner))
        .collect();
    let mut mean = vec![0.0; n * n];
    for s in &spectra {
        for (m, p) in mean.iter_mut().zip(s) {
            *m += p;
        }
    }
    let half = n / 2;
    let mut sum = vec![0.0; half + 1];
    let mut count = vec![0u64; half + 1];
    let signed = |k: usize| if k < half { k as f64 } else { k as f64 - n as f64 };
    for r in 0..n {
        for c in 0..n {
            let rad = signed(r).hypot(signed(c)).round() as usize;
            if (1..=half).contains(&rad) {
                sum[rad] += mean[r * n + c] / frames.len() as f64;
                count[rad] += 1;
            }
        }
    }
    let frequencies: Vec<f64> = (1..=half).map(|k| k as f64).collect();
    let power: Vec<f64> = (1..=half).map(|k| sum[k] / count[k] as f64).collect();
    let f_max = half as f64;
    let band = (f_max / 64.0, f_max / 4.0);
    let (xs, ys): (Vec<f64>, Vec<f64>) = frequencies
        .iter()
        .zip(&power)
        .filter(|(f, p)| **f >= band.0 && **f <= band.1 && **p > 0.0)
        .map(|(f, p)| (f.log10(), p.log10()))
        .unzip();
    let (slope, intercept) =
        fit_line(&xs, &ys).ok_or_else(|| Error::InvalidArgument("degenerate spectrum fit".into()))?;
    Ok(SpectrumReport { frames: frames.len(), crop_size: n, frequencies, power, fit_band: band, slope, intercept })
}

/// Direction of a finite difference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DerivativeAxis {
    /// Horizontal forward difference, wrapping around the seam.
    SpatialX,
    /// Vertical forward difference (no wrap across the poles).
    SpatialY,
    /// Difference of consecutive frames.
    Temporal,
}

/// Histogram and kurtosis of a derivative; `kurtosis` is `None` when all
/// differences are equal (degenerate).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivativeStats {
    pub axis: DerivativeAxis,
    pub histogram: Histogram,
    pub moments: Moments,
    pub kurtosis: Option<f64>,
}

impl DerivativeStats {
    fn new(axis: DerivativeAxis, histogram: Histogram) -> Self {
        Self { axis, histogram, moments: Moments::default(), kurtosis: None }
    }

    fn push(&mut self, x: f64) {
        self.histogram.push(x);
        self.moments.push(x);
    }

    fn merge(&mut self, o: &DerivativeStats) -> Result<()> {
        self.histogram.merge(&o.histogram)?;
        self.moments.merge(&o.moments);
        Ok(())
    }

    fn finish(mut self) -> Self {
        self.kurtosis = self.moments.kurtosis();
        self
    }
}

fn spatial_differences(plane: &[f32], width: usize, height: usize, axis: DerivativeAxis, out: &mut DerivativeStats) {
    match axis {
        DerivativeAxis::SpatialX => {
            for row in plane.chunks_exact(width) {
                for c in 0..width {
                    out.push(row[(c + 1) % width] as f64 - row[c] as f64);
                }
            }
        }
        DerivativeAxis::SpatialY => {
            for r in 0..height.saturating_sub(1) {
                for c in 0..width {
                    out.push(plane[(r + 1) * width + c] as f64 - plane[r * width + c] as f64);
                }
            }
        }
        DerivativeAxis::Temporal => unreachable!("temporal differences need two planes"),
    }
}

/// Derivative distribution of grayscale frames. Temporal differences are
/// taken between consecutive entries of `frames` and need at least two.
pub fn derivative_kurtosis(frames: &[Image], axis: DerivativeAxis) -> Result<DerivativeStats> {
    require_frames(frames)?;
    let fresh = || DerivativeStats::new(axis, Histogram::symmetric_integer(255));
    let parts: Vec<DerivativeStats> = match axis {
        DerivativeAxis::Temporal => {
            if frames.len() < 2 {
                return Err(Error::EmptyInput("temporal derivatives need at least two frames".into()));
            }
            for pair in frames.windows(2) {
                if pair[0].width() != pair[1].width() || pair[0].height() != pair[1].height() {
                    return Err(Error::ShapeMismatch {
                        left: format!("{}x{}", pair[0].height(), pair[0].width()),
                        right: format!("{}x{}", pair[1].height(), pair[1].width()),
                    });
                }
            }
            frames
                .par_windows(2)
                .map(|pair| {
                    let mut s = fresh();
                    for (a, b) in pair[0].to_gray().iter().zip(pair[1].to_gray()) {
                        s.push(b as f64 - *a as f64);
                    }
                    s
                })
                .collect()
        }
        _ => frames
            .par_iter()
            .map(|f| {
                let mut s = fresh();
                spatial_differences(&f.to_gray(), f.width(), f.height(), axis, &mut s);
                s
            })
            .collect(),
    };
    let mut total = fresh();
    for p in &parts {
        total.merge(p)?;
    }
    Ok(total.finish())
}

/// Speeds below this are treated as having no direction.
pub const DIRECTION_MIN_SPEED: f64 = 1e-6;

/// Distributions of flow fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowStats {
    pub fields: usize,
    pub invalid_pixels: u64,
    /// Horizontal component `u`, unit bins over `[-100, 100)`.
    pub u_hist: Histogram,
    /// Speed: one bin `[0, 0.01)`, then 50 log-spaced bins up to 1000.
    pub speed_hist: Histogram,
    /// `atan2(v, u)` in `(-pi, pi]`, 72 bins.
    pub direction_hist: Histogram,
    pub undefined_direction: u64,
    pub du_dx: DerivativeStats,
    pub du_dy: DerivativeStats,
    pub dv_dx: DerivativeStats,
    pub dv_dy: DerivativeStats,
}

fn speed_edges() -> Vec<f64> {
    let mut e = vec![0.0];
    let (lo, hi, bins) = (-2.0f64, 3.0f64, 50);
    e.extend((0..=bins).map(|i| 10f64.powf(lo + (hi - lo) * i as f64 / bins as f64)));
    e
}

fn flow_derivative_hist() -> Histogram {
    Histogram::linear(-10.0, 10.0, 200)
}

impl FlowStats {
    fn empty() -> Self {
        let d = |axis| DerivativeStats::new(axis, flow_derivative_hist());
        Self {
            fields: 0,
            invalid_pixels: 0,
            u_hist: Histogram::linear(-100.0, 100.0, 200),
            speed_hist: Histogram::with_edges(speed_edges()),
            direction_hist: Histogram::linear(-PI, PI, 72),
            undefined_direction: 0,
            du_dx: d(DerivativeAxis::SpatialX),
            du_dy: d(DerivativeAxis::SpatialY),
            dv_dx: d(DerivativeAxis::SpatialX),
            dv_dy: d(DerivativeAxis::SpatialY),
        }
    }

    fn of_field(f: &FlowField) -> Self {
        let mut s = Self::empty();
        s.fields = 1;
        for (&u, &v) in f.u().iter().zip(f.v()) {
            let (u, v) = (u as f64, v as f64);
            if !(u.is_finite() && v.is_finite()) {
                s.invalid_pixels += 1;
                continue;
            }
            s.u_hist.push(u);
            let speed = u.hypot(v);
            s.speed_hist.push(speed);
            if speed < DIRECTION_MIN_SPEED {
                s.undefined_direction += 1;
            } else {
                let mut theta = v.atan2(u);
                if theta <= -PI {
                    theta = PI;
                }
                s.direction_hist.push(theta);
            }
        }
        let (w, h) = (f.width(), f.height());
        spatial_differences(f.u(), w, h, DerivativeAxis::SpatialX, &mut s.du_dx);
        spatial_differences(f.u(), w, h, DerivativeAxis::SpatialY, &mut s.du_dy);
        spatial_differences(f.v(), w, h, DerivativeAxis::SpatialX, &mut s.dv_dx);
        spatial_differences(f.v(), w, h, DerivativeAxis::SpatialY, &mut s.dv_dy);
        s
    }

    fn merge(&mut self, o: &FlowStats) -> Result<()> {
        self.fields += o.fields;
        self.invalid_pixels += o.invalid_pixels;
        self.u_hist.merge(&o.u_hist)?;
        self.speed_hist.merge(&o.speed_hist)?;
        self.direction_hist.merge(&o.direction_hist)?;
        self.undefined_direction += o.undefined_direction;
        self.du_dx.merge(&o.du_dx)?;
        self.du_dy.merge(&o.du_dy)?;
        self.dv_dx.merge(&o.dv_dx)?;
        self.dv_dy.merge(&o.dv_dy)
    }
}

/// Histograms of `u`, speed, direction and spatial derivatives of `u`, `v`.
pub fn flow_statistics(flows: &[FlowField]) -> Result<FlowStats> {
    if flows.is_empty() {
        return Err(Error::EmptyInput("no flow fields".into()));
    }
    let parts: Vec<FlowStats> = flows.par_iter().map(FlowStats::of_field).collect();
    let mut total = FlowStats::empty();
    for p in &parts {
        total.merge(p)?;
    }
    for d in [&mut total.du_dx, &mut total.du_dy, &mut total.dv_dx, &mut total.dv_dy] {
        d.kurtosis = d.moments.kurtosis();
    }
    Ok(total)
}

/// Frame and flow statistics for a corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub frames: usize,
    pub luminance: Histogram,
    pub spectrum: Option<SpectrumReport>,
    pub spatial_x: DerivativeStats,
    pub spatial_y: DerivativeStats,
    /// Present when at least one sequence has two or more frames.
    pub temporal: Option<DerivativeStats>,
    pub flow: Option<FlowStats>,
}

/// Statistics for frames grouped into sequences (temporal differences never
/// cross sequence boundaries) and an optional set of flow fields.
pub fn corpus_statistics(sequences: &[Vec<Image>], flows: &[FlowField]) -> Result<StatsReport> {
    let all: Vec<Image> = sequences.iter().flatten().cloned().collect();
    require_frames(&all)?;
    let luminance = luminance_histogram(&all)?;
    let spectrum = match power_spectrum_slope(&all) {
        Ok(s) => Some(s),
        Err(Error::InvalidArgument(msg)) => {
            log::warn!("skipping power spectrum: {msg}");
            None
        }
        Err(e) => return Err(e),
    };
    let spatial_x = derivative_kurtosis(&all, DerivativeAxis::SpatialX)?;
    let spatial_y = derivative_kurtosis(&all, DerivativeAxis::SpatialY)?;
    let mut temporal: Option<DerivativeStats> = None;
    for seq in sequences.iter().filter(|s| s.len() >= 2) {
        let t = derivative_kurtosis(seq, DerivativeAxis::Temporal)?;
        match temporal.as_mut() {
            Some(acc) => acc.merge(&t)?,
            None => temporal = Some(t),
        }
    }
    let temporal = temporal.map(DerivativeStats::finish);
    let flow = if flows.is_empty() { None } else { Some(flow_statistics(flows)?) };
    Ok(StatsReport { frames: all.len(), luminance, spectrum, spatial_x, spatial_y, temporal, flow })
}
