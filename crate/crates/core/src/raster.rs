//! Raster containers: multi-channel images and two-channel flow fields.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sphere::EquirectShape;

/// Resampling kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Interpolation {
    Nearest,
    #[default]
    Bilinear,
}

impl std::str::FromStr for Interpolation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nearest" => Ok(Interpolation::Nearest),
            "bilinear" => Ok(Interpolation::Bilinear),
            other => Err(Error::InvalidArgument(format!("unknown interpolation `{other}`"))),
        }
    }
}

/// Interleaved multi-channel image with `f32` samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f32>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if channels == 0 || data.len() != width * height * channels {
            return Err(Error::BufferLength {
                len: data.len(),
                shape: format!("{height}x{width}x{channels}"),
            });
        }
        Ok(Self { width, height, channels, data })
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f32) -> Self {
        Self { width, height, channels, data: vec![value; width * height * channels] }
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f32,
    ) -> Self {
        let mut data = Vec::with_capacity(width * height * channels);
        for row in 0..height {
            for col in 0..width {
                for c in 0..channels {
                    data.push(f(col, row, c));
                }
            }
        }
        Self { width, height, channels, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn get(&self, col: usize, row: usize, channel: usize) -> f32 {
        self.data[(row * self.width + col) * self.channels + channel]
    }

    pub fn equirect_shape(&self) -> Result<EquirectShape> {
        EquirectShape::new(self.width, self.height)
    }

    /// Luma with weights (0.299, 0.587, 0.114); single-channel images pass through.
    pub fn to_gray(&self) -> Vec<f32> {
        match self.channels {
            1 => self.data.clone(),
            c if c >= 3 => self
                .data
                .chunks_exact(c)
                .map(|px| (0.299 * px[0] as f64 + 0.587 * px[1] as f64 + 0.114 * px[2] as f64) as f32)
                .collect(),
            c => self
                .data
                .chunks_exact(c)
                .map(|px| px.iter().sum::<f32>() / c as f32)
                .collect(),
        }
    }
}

/// Dense optical flow in pixel units: `u` horizontal, `v` vertical, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    width: usize,
    height: usize,
    u: Vec<f32>,
    v: Vec<f32>,
}

impl FlowField {
    pub fn new(width: usize, height: usize, u: Vec<f32>, v: Vec<f32>) -> Result<Self> {
        let n = width * height;
        if u.len() != n || v.len() != n {
            return Err(Error::BufferLength {
                len: u.len().max(v.len()),
                shape: format!("{height}x{width}"),
            });
        }
        Ok(Self { width, height, u, v })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        let n = width * height;
        Self { width, height, u: vec![0.0; n], v: vec![0.0; n] }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> (f32, f32)) -> Self {
        let n = width * height;
        let mut u = Vec::with_capacity(n);
        let mut v = Vec::with_capacity(n);
        for row in 0..height {
            for col in 0..width {
                let (a, b) = f(col, row);
                u.push(a);
                v.push(b);
            }
        }
        Self { width, height, u, v }
    }

    /// Builds a field from interleaved `(u, v)` pairs.
    pub fn from_interleaved(width: usize, height: usize, uv: &[f32]) -> Result<Self> {
        if uv.len() != 2 * width * height {
            return Err(Error::BufferLength { len: uv.len(), shape: format!("{height}x{width}x2") });
        }
        let (u, v) = uv.chunks_exact(2).map(|p| (p[0], p[1])).unzip();
        Ok(Self { width, height, u, v })
    }

    pub fn to_interleaved(&self) -> Vec<f32> {
        self.u.iter().zip(&self.v).flat_map(|(&a, &b)| [a, b]).collect()
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    pub fn u(&self) -> &[f32] {
        &self.u
    }

    pub fn v(&self) -> &[f32] {
        &self.v
    }

    pub fn u_mut(&mut self) -> &mut [f32] {
        &mut self.u
    }

    pub fn v_mut(&mut self) -> &mut [f32] {
        &mut self.v
    }

    pub fn at(&self, col: usize, row: usize) -> (f32, f32) {
        let i = row * self.width + col;
        (self.u[i], self.v[i])
    }

    pub fn equirect_shape(&self) -> Result<EquirectShape> {
        EquirectShape::new(self.width, self.height)
    }

    pub fn same_shape(&self, other: &FlowField) -> Result<()> {
        if self.width != other.width || self.height != other.height {
            return Err(Error::ShapeMismatch {
                left: format!("{}x{}", self.height, self.width),
                right: format!("{}x{}", other.height, other.width),
            });
        }
        Ok(())
    }

    /// Checks finiteness and `|u| < width`, `|v| < height`.
    pub fn validate(&self) -> Result<()> {
        let (w, h) = (self.width as f32, self.height as f32);
        for (i, (&a, &b)) in self.u.iter().zip(&self.v).enumerate() {
            if !(a.is_finite() && b.is_finite() && a.abs() < w && b.abs() < h) {
                return Err(Error::InvalidArgument(format!(
                    "flow vector ({a}, {b}) at pixel {i} is non-finite or out of range"
                )));
            }
        }
        Ok(())
    }

    /// Resamples to a new resolution and rescales vectors: `u` by the width
    /// ratio, `v` by the height ratio.
    pub fn rescale(&self, width: usize, height: usize) -> Result<FlowField> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidArgument("target resolution must be non-zero".into()));
        }
        let sx = self.width as f64 / width as f64;
        let sy = self.height as f64 / height as f64;
        Ok(FlowField::from_fn(width, height, |col, row| {
            // align pixel centers of both grids
            let c = (col as f64 + 0.5) * sx - 0.5;
            let r = (row as f64 + 0.5) * sy - 0.5;
            let u = sample_bilinear(&self.u, self.width, self.height, 1, 0, c, r);
            let v = sample_bilinear(&self.v, self.width, self.height, 1, 0, c, r);
            ((u / sx) as f32, (v / sy) as f32)
        }))
    }
}

#[inline]
pub(crate) fn wrap_index(i: i64, n: usize) -> usize {
    i.rem_euclid(n as i64) as usize
}

#[inline]
pub(crate) fn clamp_index(i: i64, n: usize) -> usize {
    i.clamp(0, n as i64 - 1) as usize
}

/// Bilinear sample of an interleaved buffer with horizontal wraparound and
/// vertical clamping.
pub(crate) fn sample_bilinear(
    data: &[f32],
    width: usize,
    height: usize,
    stride: usize,
    channel: usize,
    col: f64,
    row: f64,
) -> f64 {
    let c0 = col.floor();
    let r0 = row.floor();
    let fc = col - c0;
    let fr = row - r0;
    let (c0, r0) = (c0 as i64, r0 as i64);
    let ca = wrap_index(c0, width);
    let cb = wrap_index(c0 + 1, width);
    let ra = clamp_index(r0, height);
    let rb = clamp_index(r0 + 1, height);
    let at = |c: usize, r: usize| data[(r * width + c) * stride + channel] as f64;
    let top = at(ca, ra) * (1.0 - fc) + at(cb, ra) * fc;
    let bottom = at(ca, rb) * (1.0 - fc) + at(cb, rb) * fc;
    top * (1.0 - fr) + bottom * fr
}

/// Index of the nearest pixel with horizontal wraparound and vertical clamping.
#[inline]
pub(crate) fn nearest_index(width: usize, height: usize, col: f64, row: f64) -> usize {
    let c = wrap_index(col.round() as i64, width);
    let r = clamp_index(row.round() as i64, height);
    r * width + c
}
