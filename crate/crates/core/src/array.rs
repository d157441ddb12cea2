//! Kernels over borrowed `f32` buffers for foreign-language callers.
//!
//! Every entry point takes an [`ArrayView`], refuses anything that is not
//! contiguous row-major, and forwards to the same library routines the rest
//! of the crate uses, so results are bit-identical to the typed API.

use std::str::FromStr;

use crate::distortion::DensityMap;
use crate::error::{Error, Result};
use crate::metrics::{speed_binned, MetricReport};
use crate::raster::{FlowField, Image, Interpolation};
use crate::siamese::{AugmentationSampler, Strategy};
use crate::sphere::rotation_from_euler;
use crate::warp::{build_warp_map, warp_flow, warp_image};

/// A strided view of `f32` elements. Strides count elements, not bytes.
#[derive(Debug, Clone)]
pub struct ArrayView<'a> {
    data: &'a [f32],
    shape: Vec<usize>,
    strides: Vec<isize>,
}

fn row_major_strides(shape: &[usize]) -> Vec<isize> {
    let mut strides = vec![1isize; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * shape[i + 1] as isize;
    }
    strides
}

impl<'a> ArrayView<'a> {
    /// A contiguous row-major view.
    pub fn new(data: &'a [f32], shape: &[usize]) -> Result<Self> {
        Self::with_strides(data, shape, &row_major_strides(shape))
    }

    /// A view with explicit strides. Every addressed element must lie inside
    /// `data`.
    pub fn with_strides(data: &'a [f32], shape: &[usize], strides: &[isize]) -> Result<Self> {
        if shape.len() != strides.len() {
            return Err(Error::InvalidArgument(format!(
                "shape has {} dimensions but strides have {}",
                shape.len(),
                strides.len()
            )));
        }
        if shape.iter().all(|&n| n > 0) {
            let (mut lo, mut hi) = (0isize, 0isize);
            for (&n, &s) in shape.iter().zip(strides) {
                let reach = s.checked_mul(n as isize - 1).ok_or_else(|| Error::InvalidArgument("stride overflow".into()))?;
                if reach < 0 {
                    lo += reach;
                } else {
                    hi += reach;
                }
            }
            if lo < 0 || hi as usize >= data.len() {
                return Err(Error::BufferLength { len: data.len(), shape: format!("{shape:?} with strides {strides:?}") });
            }
        }
        Ok(Self { data, shape: shape.to_vec(), strides: strides.to_vec() })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn strides(&self) -> &[isize] {
        &self.strides
    }

    pub fn is_contiguous(&self) -> bool {
        let n: usize = self.shape.iter().product();
        n == 0 || (self.strides == row_major_strides(&self.shape) && self.data.len() == n)
    }

    /// The underlying buffer, or [`Error::NonContiguous`].
    pub fn contiguous(&self) -> Result<&'a [f32]> {
        if self.is_contiguous() {
            Ok(self.data)
        } else {
            Err(Error::NonContiguous { shape: self.shape.clone(), strides: self.strides.clone() })
        }
    }

    fn as_image(&self) -> Result<Image> {
        let data = self.contiguous()?.to_vec();
        match *self.shape.as_slice() {
            [h, w] => Image::new(w, h, 1, data),
            [h, w, c] => Image::new(w, h, c, data),
            _ => Err(Error::InvalidArgument(format!("image must be (H, W) or (H, W, C), got {:?}", self.shape))),
        }
    }

    fn as_flow(&self) -> Result<FlowField> {
        match *self.shape.as_slice() {
            [h, w, 2] => FlowField::from_interleaved(w, h, self.contiguous()?),
            _ => Err(Error::InvalidArgument(format!("flow must be (H, W, 2), got {:?}", self.shape))),
        }
    }

    fn as_density(&self) -> Result<DensityMap> {
        match *self.shape.as_slice() {
            [h, w] => DensityMap::new(w, h, self.contiguous()?.iter().map(|&x| x as f64).collect()),
            _ => Err(Error::InvalidArgument(format!("density must be (H, W), got {:?}", self.shape))),
        }
    }
}

/// What a warped buffer holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WarpKind {
    Image,
    Flow,
}

impl FromStr for WarpKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "image" => Ok(WarpKind::Image),
            "flow" => Ok(WarpKind::Flow),
            other => Err(Error::InvalidArgument(format!("unknown warp kind `{other}`"))),
        }
    }
}

/// Rotates an image `(H, W[, C])` or flow `(H, W, 2)` buffer. Returns a new
/// buffer with the input's shape; the input is never modified.
pub fn warp_array(
    input: &ArrayView<'_>,
    pitch: f64,
    roll: f64,
    yaw: f64,
    kind: WarpKind,
    interp: Interpolation,
) -> Result<Vec<f32>> {
    let r = rotation_from_euler(pitch, roll, yaw)?;
    match kind {
        WarpKind::Image => {
            let img = input.as_image()?;
            let map = build_warp_map(&r, img.width(), img.height())?;
            Ok(warp_image(&img, &map, interp)?.into_data())
        }
        WarpKind::Flow => {
            let f = input.as_flow()?;
            let map = build_warp_map(&r, f.width(), f.height())?;
            Ok(warp_flow(&f, &map, interp)?.to_interleaved())
        }
    }
}

/// Full metric report for `(H, W, 2)` prediction and ground truth buffers,
/// optionally distortion weighted by an `(H, W)` density buffer.
pub fn metrics_array(pred: &ArrayView<'_>, gt: &ArrayView<'_>, density: Option<&ArrayView<'_>>) -> Result<MetricReport> {
    let (p, g) = (pred.as_flow()?, gt.as_flow()?);
    let d = density.map(|d| d.as_density()).transpose()?;
    speed_binned(&p, &g, d.as_ref())
}

/// `n` augmentation pairs as `[left, right]` triples of (pitch, roll, yaw).
pub fn sample_augmentations(strategy: &str, seed: u64, n: usize) -> Result<Vec<[[f64; 3]; 2]>> {
    let sampler = AugmentationSampler::new(Strategy::from_str(strategy)?, seed);
    Ok(sampler
        .take(n)
        .into_iter()
        .map(|p| [[p.left.pitch, p.left.roll, p.left.yaw], [p.right.pitch, p.right.roll, p.right.yaw]])
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn contiguity() {
        let buf = vec![0.0f32; 24];
        assert!(ArrayView::new(&buf, &[2, 4, 3]).unwrap().is_contiguous());
        let transposed = ArrayView::with_strides(&buf, &[4, 2, 3], &[3, 12, 1]).unwrap();
        assert!(!transposed.is_contiguous());
        assert!(matches!(transposed.contiguous(), Err(Error::NonContiguous { .. })));
        assert!(ArrayView::with_strides(&buf, &[2, 4, 3], &[13, 3, 1]).is_err());
        assert!(ArrayView::new(&buf[..20], &[2, 4, 3]).is_err());
    }

    #[test]
    fn shape_errors() {
        let buf = vec![0.0f32; 24];
        let v = ArrayView::new(&buf, &[2, 4, 3]).unwrap();
        assert!(warp_array(&v, 0.0, 0.0, 0.0, WarpKind::Flow, Interpolation::Bilinear).is_err());
        assert!(sample_augmentations("v3", 0, 1).is_err());
        assert_eq!("flow".parse::<WarpKind>().unwrap(), WarpKind::Flow);
    }
}
