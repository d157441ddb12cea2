//! Flow error metrics: end-point error, angular error, their
//! distortion-weighted variants, and speed/density-binned aggregates.
//!
//! Pixels whose ground truth is non-finite are skipped. Reductions sum each
//! row sequentially and then combine row partials pairwise in row order, so
//! results do not depend on the number of worker threads.

use std::ops::AddAssign;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distortion::{DensityBins, DensityMap};
use crate::error::{Error, Result};
use crate::raster::FlowField;

/// Euclidean norm of the flow difference.
#[inline]
pub fn endpoint_error(pred: (f64, f64), gt: (f64, f64)) -> f64 {
    (pred.0 - gt.0).hypot(pred.1 - gt.1)
}

/// Angle between `(u_e, v_e, 1)` and `(u_r, v_r, 1)`, in `[0, pi]`.
#[inline]
pub fn angular_error(pred: (f64, f64), gt: (f64, f64)) -> f64 {
    let (ue, ve) = pred;
    let (ur, vr) = gt;
    let num = ue * ur + ve * vr + 1.0;
    let den = ((ur * ur + vr * vr + 1.0) * (ue * ue + ve * ve + 1.0)).sqrt();
    (num / den).clamp(-1.0, 1.0).acos()
}

/// Ground-truth speed regions reported alongside the global means.
/// Regions overlap: `s<5` is contained in `s<10`, and so on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SpeedRegion {
    #[serde(rename = "s>=0")]
    All,
    #[serde(rename = "s<5")]
    Below5,
    #[serde(rename = "s<10")]
    Below10,
    #[serde(rename = "s<20")]
    Below20,
    #[serde(rename = "s>=20")]
    AtLeast20,
}

impl SpeedRegion {
    pub const ALL: [SpeedRegion; 5] = [
        SpeedRegion::All,
        SpeedRegion::Below5,
        SpeedRegion::Below10,
        SpeedRegion::Below20,
        SpeedRegion::AtLeast20,
    ];

    pub fn contains(self, speed: f64) -> bool {
        match self {
            SpeedRegion::All => speed >= 0.0,
            SpeedRegion::Below5 => speed < 5.0,
            SpeedRegion::Below10 => speed < 10.0,
            SpeedRegion::Below20 => speed < 20.0,
            SpeedRegion::AtLeast20 => speed >= 20.0,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            SpeedRegion::All => "s>=0",
            SpeedRegion::Below5 => "s<5",
            SpeedRegion::Below10 => "s<10",
            SpeedRegion::Below20 => "s<20",
            SpeedRegion::AtLeast20 => "s>=20",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct BinSums {
    count: u64,
    epe: f64,
    ae: f64,
}

impl AddAssign for BinSums {
    fn add_assign(&mut self, o: Self) {
        self.count += o.count;
        self.epe += o.epe;
        self.ae += o.ae;
    }
}

impl BinSums {
    fn push(&mut self, epe: f64, ae: f64) {
        self.count += 1;
        self.epe += epe;
        self.ae += ae;
    }

    fn stats(&self) -> BinStats {
        let mean = |s: f64| (self.count > 0).then(|| s / self.count as f64);
        BinStats { count: self.count, epe: mean(self.epe), ae: mean(self.ae) }
    }
}

/// Sums gathered over some set of pixels.
#[derive(Debug, Clone, Default, PartialEq)]
struct Partial {
    all: BinSums,
    weighted: BinSums,
    speed: [BinSums; 5],
    density: Vec<BinSums>,
}

impl Partial {
    fn empty(density_bins: usize) -> Self {
        Self { density: vec![BinSums::default(); density_bins], ..Default::default() }
    }

    fn merge(&mut self, o: &Partial) {
        self.all += o.all;
        self.weighted += o.weighted;
        for (a, b) in self.speed.iter_mut().zip(&o.speed) {
            *a += *b;
        }
        for (a, b) in self.density.iter_mut().zip(&o.density) {
            *a += *b;
        }
    }
}

fn pairwise(mut parts: Vec<Partial>) -> Option<Partial> {
    while parts.len() > 1 {
        let mut next = Vec::with_capacity(parts.len().div_ceil(2));
        let mut it = parts.into_iter();
        while let Some(mut a) = it.next() {
            if let Some(b) = it.next() {
                a.merge(&b);
            }
            next.push(a);
        }
        parts = next;
    }
    parts.pop()
}

fn check_mask(mask: Option<&[bool]>, n: usize) -> Result<()> {
    match mask {
        Some(m) if m.len() != n => Err(Error::ShapeMismatch {
            left: format!("mask of {} pixels", m.len()),
            right: format!("field of {n} pixels"),
        }),
        _ => Ok(()),
    }
}

fn check_density(d: &DensityMap, f: &FlowField) -> Result<()> {
    if d.width() != f.width() || d.height() != f.height() {
        return Err(Error::ShapeMismatch {
            left: format!("{}x{} density", d.height(), d.width()),
            right: format!("{}x{} flow", f.height(), f.width()),
        });
    }
    Ok(())
}

fn collect(
    pred: &FlowField,
    gt: &FlowField,
    density: Option<&DensityMap>,
    bins: Option<(&DensityMap, &DensityBins)>,
    mask: Option<&[bool]>,
) -> Result<Partial> {
    pred.same_shape(gt)?;
    check_mask(mask, gt.len())?;
    if let Some(d) = density {
        check_density(d, gt)?;
    }
    let nbins = match bins {
        Some((d, b)) => {
            check_density(d, gt)?;
            b.len()
        }
        None => 0,
    };
    let width = gt.width();
    let rows: Vec<Result<Partial>> = (0..gt.height())
        .into_par_iter()
        .map(|row| {
            let mut p = Partial::empty(nbins);
            for i in row * width..(row + 1) * width {
                if mask.is_some_and(|m| !m[i]) {
                    continue;
                }
                let g = (gt.u()[i] as f64, gt.v()[i] as f64);
                if !(g.0.is_finite() && g.1.is_finite()) {
                    continue;
                }
                let e = (pred.u()[i] as f64, pred.v()[i] as f64);
                let epe = endpoint_error(e, g);
                let ae = angular_error(e, g);
                p.all.push(epe, ae);
                if let Some(d) = density {
                    let w = 1.0 / (1.0 - d.values()[i]);
                    p.weighted.push(epe * w, ae * w);
                }
                let speed = g.0.hypot(g.1);
                for (sums, region) in p.speed.iter_mut().zip(SpeedRegion::ALL) {
                    if region.contains(speed) {
                        sums.push(epe, ae);
                    }
                }
                if let Some((d, b)) = bins {
                    let value = d.values()[i];
                    let k = b.bin_of(value).ok_or(Error::DensityOutOfRange { index: i, value })?;
                    p.density[k].push(epe, ae);
                }
            }
            Ok(p)
        })
        .collect();
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(pairwise(rows).unwrap_or_else(|| Partial::empty(nbins)))
}

fn mean_of(sum: f64, count: u64) -> Result<f64> {
    if count == 0 {
        return Err(Error::EmptyMask);
    }
    Ok(sum / count as f64)
}

/// Mean end-point error over valid (masked, finite ground truth) pixels.
pub fn epe(pred: &FlowField, gt: &FlowField, mask: Option<&[bool]>) -> Result<f64> {
    let p = collect(pred, gt, None, None, mask)?;
    mean_of(p.all.epe, p.all.count)
}

/// Mean angular error in radians.
pub fn ae(pred: &FlowField, gt: &FlowField, mask: Option<&[bool]>) -> Result<f64> {
    let p = collect(pred, gt, None, None, mask)?;
    mean_of(p.all.ae, p.all.count)
}

/// Mean of per-pixel end-point error divided by `1 - d`.
pub fn epe_d(pred: &FlowField, gt: &FlowField, d: &DensityMap, mask: Option<&[bool]>) -> Result<f64> {
    let p = collect(pred, gt, Some(d), None, mask)?;
    mean_of(p.weighted.epe, p.weighted.count)
}

/// Mean of per-pixel angular error divided by `1 - d`.
pub fn ae_d(pred: &FlowField, gt: &FlowField, d: &DensityMap, mask: Option<&[bool]>) -> Result<f64> {
    let p = collect(pred, gt, Some(d), None, mask)?;
    mean_of(p.weighted.ae, p.weighted.count)
}

/// Pixel count and mean errors of one bin; means are absent for empty bins.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinStats {
    pub count: u64,
    pub epe: Option<f64>,
    pub ae: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedBinStats {
    pub region: SpeedRegion,
    #[serde(flatten)]
    pub stats: BinStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityBinStats {
    pub lo: f64,
    pub hi: f64,
    #[serde(flatten)]
    pub stats: BinStats,
}

/// Aggregate metrics. Errors are in pixels, angles in radians.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub valid_pixels: u64,
    pub epe: f64,
    pub ae: f64,
    /// Distortion-weighted end-point error (the weighted `s>=0` column).
    pub epe_d: Option<f64>,
    pub ae_d: Option<f64>,
    pub per_speed_bin: Vec<SpeedBinStats>,
    pub per_density_bin: Vec<DensityBinStats>,
}

impl MetricReport {
    pub fn speed_bin(&self, region: SpeedRegion) -> &BinStats {
        &self.per_speed_bin.iter().find(|b| b.region == region).expect("all regions reported").stats
    }

    pub fn csv_header(&self) -> String {
        let mut cols = vec!["valid_pixels".to_string(), "epe".into(), "ae".into(), "epe_d".into(), "ae_d".into()];
        for b in &self.per_speed_bin {
            let l = b.region.label();
            cols.extend([format!("count[{l}]"), format!("epe[{l}]"), format!("ae[{l}]")]);
        }
        for b in &self.per_density_bin {
            let l = format!("{}:{}", b.lo, b.hi);
            cols.extend([format!("count[d{l}]"), format!("epe[d{l}]"), format!("ae[d{l}]")]);
        }
        cols.join(",")
    }

    /// One CSV row matching [`csv_header`](Self::csv_header); absent values are empty cells.
    pub fn csv_row(&self) -> String {
        let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
        let mut cells = vec![
            self.valid_pixels.to_string(),
            self.epe.to_string(),
            self.ae.to_string(),
            opt(self.epe_d),
            opt(self.ae_d),
        ];
        let stats = self
            .per_speed_bin
            .iter()
            .map(|b| b.stats)
            .chain(self.per_density_bin.iter().map(|b| b.stats));
        for s in stats {
            cells.extend([s.count.to_string(), opt(s.epe), opt(s.ae)]);
        }
        cells.join(",")
    }
}

/// Accumulates metric sums over several flow pairs; pixels from all pairs
/// are pooled before averaging.
#[derive(Debug, Clone)]
pub struct MetricAccumulator {
    weighted: bool,
    bins: Option<DensityBins>,
    sums: Partial,
}

impl MetricAccumulator {
    /// `weighted` enables the distortion-weighted means; `bins` enables the
    /// density-binned series. Both need a density map on every [`add`](Self::add).
    pub fn new(weighted: bool, bins: Option<DensityBins>) -> Self {
        let n = bins.as_ref().map_or(0, |b| b.len());
        Self { weighted, bins, sums: Partial::empty(n) }
    }

    pub fn add(
        &mut self,
        pred: &FlowField,
        gt: &FlowField,
        density: Option<&DensityMap>,
        mask: Option<&[bool]>,
    ) -> Result<()> {
        let needs_density = self.weighted || self.bins.is_some();
        let d = match (needs_density, density) {
            (true, None) => return Err(Error::InvalidArgument("density map required".into())),
            (_, d) => d,
        };
        let weighted = if self.weighted { d } else { None };
        let bins = self.bins.as_ref().and_then(|b| d.map(|d| (d, b)));
        let p = collect(pred, gt, weighted, bins, mask)?;
        self.sums.merge(&p);
        Ok(())
    }

    /// Adds the sums of another accumulator with the same configuration.
    /// Merging in a fixed order gives bit-reproducible results.
    pub fn merge(&mut self, other: &MetricAccumulator) -> Result<()> {
        if self.weighted != other.weighted || self.bins != other.bins {
            return Err(Error::InvalidArgument("accumulators were configured differently".into()));
        }
        self.sums.merge(&other.sums);
        Ok(())
    }

    pub fn valid_pixels(&self) -> u64 {
        self.sums.all.count
    }

    pub fn finish(&self) -> Result<MetricReport> {
        let s = &self.sums;
        let epe = mean_of(s.all.epe, s.all.count)?;
        let ae = mean_of(s.all.ae, s.all.count)?;
        let weighted = self.weighted.then(|| s.weighted.stats());
        let per_speed_bin = SpeedRegion::ALL
            .iter()
            .zip(&s.speed)
            .map(|(&region, b)| SpeedBinStats { region, stats: b.stats() })
            .collect();
        let per_density_bin = match &self.bins {
            Some(b) => b
                .edges()
                .windows(2)
                .zip(&s.density)
                .map(|(e, sums)| DensityBinStats { lo: e[0], hi: e[1], stats: sums.stats() })
                .collect(),
            None => Vec::new(),
        };
        Ok(MetricReport {
            valid_pixels: s.all.count,
            epe,
            ae,
            epe_d: weighted.and_then(|w| w.epe),
            ae_d: weighted.and_then(|w| w.ae),
            per_speed_bin,
            per_density_bin,
        })
    }
}

/// Global, weighted and speed-binned metrics for one flow pair.
pub fn speed_binned(pred: &FlowField, gt: &FlowField, d: Option<&DensityMap>) -> Result<MetricReport> {
    let mut acc = MetricAccumulator::new(d.is_some(), None);
    acc.add(pred, gt, d, None)?;
    acc.finish()
}

/// Metrics split into half-open density ranges.
pub fn density_binned(pred: &FlowField, gt: &FlowField, d: &DensityMap, bins: &DensityBins) -> Result<MetricReport> {
    let mut acc = MetricAccumulator::new(true, Some(bins.clone()));
    acc.add(pred, gt, Some(d), None)?;
    acc.finish()
}
