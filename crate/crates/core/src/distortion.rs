//! Distortion density maps.
//!
//! Each cube face carries a radial density on a `[-1, 1]^2` grid: polar faces
//! (U, D) fall off from 1 at the center to 0 at the corners, equatorial faces
//! (F, B, R, L) rise from 0 at the center to 1 at the corners. The cube is then
//! resampled onto the equirectangular raster and remapped into `[0.5, 1)`.

use std::f64::consts::SQRT_2;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sphere::EquirectShape;

/// Default face resolution.
pub const DEFAULT_FACE_SIZE: usize = 256;

/// Slack that keeps remapped densities strictly below 1.
pub const REMAP_EPSILON: f64 = 1e-6;

/// Cube faces. U/D are `+z`/`-z`, F/B are `+x`/`-x`, R/L are `+y`/`-y`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CubeFace {
    U,
    D,
    F,
    B,
    R,
    L,
}

impl CubeFace {
    pub const ALL: [CubeFace; 6] = [CubeFace::U, CubeFace::D, CubeFace::F, CubeFace::B, CubeFace::R, CubeFace::L];

    pub fn is_polar(self) -> bool {
        matches!(self, CubeFace::U | CubeFace::D)
    }

    fn index(self) -> usize {
        self as usize
    }

    /// Face owning direction `(x, y, z)` and the in-face coordinates in `[-1, 1]`.
    pub fn locate(x: f64, y: f64, z: f64) -> (CubeFace, f64, f64) {
        let (ax, ay, az) = (x.abs(), y.abs(), z.abs());
        if az >= ax && az >= ay {
            let face = if z >= 0.0 { CubeFace::U } else { CubeFace::D };
            (face, x / az, y / az)
        } else if ax >= ay {
            let face = if x >= 0.0 { CubeFace::F } else { CubeFace::B };
            (face, y / ax, z / ax)
        } else {
            let face = if y >= 0.0 { CubeFace::R } else { CubeFace::L };
            (face, x / ay, z / ay)
        }
    }
}

/// Raw density over one cube face, sampled on a `size x size` grid spanning `[-1, 1]^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct CubeFaceDensity {
    face: CubeFace,
    size: usize,
    values: Vec<f64>,
}

impl CubeFaceDensity {
    pub fn face(&self) -> CubeFace {
        self.face
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Closed-form density at face coordinates `(x, y)`.
    pub fn value_at(face: CubeFace, x: f64, y: f64) -> f64 {
        let ratio = x.hypot(y) / SQRT_2;
        if face.is_polar() {
            1.0 - ratio
        } else {
            ratio
        }
    }

    /// Bilinear lookup at face coordinates in `[-1, 1]`, clamped to the face.
    pub fn sample(&self, x: f64, y: f64) -> f64 {
        let n = self.size;
        let scale = (n - 1) as f64;
        let gx = ((x + 1.0) / 2.0 * scale).clamp(0.0, scale);
        let gy = ((y + 1.0) / 2.0 * scale).clamp(0.0, scale);
        let x0 = (gx.floor() as usize).min(n - 2);
        let y0 = (gy.floor() as usize).min(n - 2);
        let fx = gx - x0 as f64;
        let fy = gy - y0 as f64;
        let at = |c: usize, r: usize| self.values[r * n + c];
        let top = at(x0, y0) * (1.0 - fx) + at(x0 + 1, y0) * fx;
        let bottom = at(x0, y0 + 1) * (1.0 - fx) + at(x0 + 1, y0 + 1) * fx;
        top * (1.0 - fy) + bottom * fy
    }
}

/// Samples the face density on its grid. `size` must be at least 2.
pub fn build_face_density(face: CubeFace, size: usize) -> Result<CubeFaceDensity> {
    if size < 2 {
        return Err(Error::InvalidArgument(format!("face size must be >= 2, got {size}")));
    }
    let coord = |i: usize| -1.0 + 2.0 * i as f64 / (size - 1) as f64;
    let mut values = Vec::with_capacity(size * size);
    for row in 0..size {
        for col in 0..size {
            values.push(CubeFaceDensity::value_at(face, coord(col), coord(row)));
        }
    }
    Ok(CubeFaceDensity { face, size, values })
}

/// All six faces in [`CubeFace::ALL`] order.
pub fn build_cube_density(size: usize) -> Result<Vec<CubeFaceDensity>> {
    CubeFace::ALL.iter().map(|&f| build_face_density(f, size)).collect()
}

/// Per-pixel weights `d` with every value finite and below 1.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMap {
    width: usize,
    height: usize,
    d: Vec<f64>,
}

impl DensityMap {
    pub fn new(width: usize, height: usize, d: Vec<f64>) -> Result<Self> {
        if d.len() != width * height {
            return Err(Error::BufferLength { len: d.len(), shape: format!("{height}x{width}") });
        }
        if let Some((index, &value)) = d.iter().enumerate().find(|(_, x)| !(x.is_finite() && **x < 1.0)) {
            return Err(Error::DensityOutOfRange { index, value });
        }
        Ok(Self { width, height, d })
    }

    pub fn uniform(width: usize, height: usize, value: f64) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.d
    }

    pub fn min(&self) -> f64 {
        self.d.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.d.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// True when every value lies in `[0.5, 1)`.
    pub fn is_remapped(&self) -> bool {
        self.d.iter().all(|&x| (0.5..1.0).contains(&x))
    }
}

/// Affine remap of a raw density in `[0, 1]` into `[0.5, 1)`.
pub fn remap_density(raw: f64) -> f64 {
    0.5 + 0.5 * raw * (1.0 - REMAP_EPSILON)
}

/// Raw (un-remapped) equirectangular density, one value per pixel.
pub fn cube_to_equirect_raw(faces: &[CubeFaceDensity], width: usize, height: usize) -> Result<Vec<f64>> {
    let shape = EquirectShape::new(width, height)?;
    let mut by_face: [Option<&CubeFaceDensity>; 6] = [None; 6];
    for f in faces {
        by_face[f.face.index()] = Some(f);
    }
    let size = faces.first().map(|f| f.size).unwrap_or(0);
    let mut table = Vec::with_capacity(6);
    for (i, slot) in by_face.iter().enumerate() {
        let face = slot.ok_or_else(|| Error::InvalidArgument(format!("missing cube face {:?}", CubeFace::ALL[i])))?;
        if face.size != size {
            return Err(Error::ShapeMismatch {
                left: format!("face {:?} size {}", face.face, face.size),
                right: format!("size {size}"),
            });
        }
        table.push(face);
    }
    let mut raw = vec![0.0; shape.len()];
    raw.par_chunks_mut(width).enumerate().for_each(|(row, line)| {
        for (col, out) in line.iter_mut().enumerate() {
            let v = shape.lift(col as f64, row as f64);
            let (face, a, b) = CubeFace::locate(v.x, v.y, v.z);
            *out = table[face.index()].sample(a, b);
        }
    });
    Ok(raw)
}

/// Projects the six face densities onto the equirectangular raster and remaps
/// them into `[0.5, 1)`.
pub fn cube_to_equirect_density(faces: &[CubeFaceDensity], width: usize, height: usize) -> Result<DensityMap> {
    let raw = cube_to_equirect_raw(faces, width, height)?;
    DensityMap::new(width, height, raw.into_iter().map(remap_density).collect())
}

/// Density map with the default face resolution.
pub fn default_density_map(width: usize, height: usize) -> Result<DensityMap> {
    cube_to_equirect_density(&build_cube_density(DEFAULT_FACE_SIZE)?, width, height)
}

/// Half-open density bins `[e_i, e_{i+1})`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityBins {
    edges: Vec<f64>,
}

impl DensityBins {
    /// Edges must be strictly increasing and cover `[0.5, 1.0)`.
    pub fn new(edges: Vec<f64>) -> Result<Self> {
        if edges.len() < 2 {
            return Err(Error::InvalidArgument("need at least two bin edges".into()));
        }
        if edges.iter().any(|e| !e.is_finite()) || edges.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument(format!("bin edges must be strictly increasing: {edges:?}")));
        }
        if edges[0] > 0.5 || *edges.last().unwrap() < 1.0 {
            return Err(Error::InvalidArgument(format!("bin edges must span [0.5, 1.0): {edges:?}")));
        }
        Ok(Self { edges })
    }

    /// `n` equal-width bins over `[0.5, 1.0)`.
    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("need at least one bin".into()));
        }
        Self::new((0..=n).map(|i| 0.5 + 0.5 * i as f64 / n as f64).collect())
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn len(&self) -> usize {
        self.edges.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn bin_of(&self, d: f64) -> Option<usize> {
        let i = self.edges.partition_point(|&e| e <= d);
        (i > 0 && i < self.edges.len()).then(|| i - 1)
    }
}

/// Bin index of every pixel.
pub fn density_bins(d: &DensityMap, bins: &DensityBins) -> Result<Vec<usize>> {
    d.d.iter()
        .enumerate()
        .map(|(index, &value)| bins.bin_of(value).ok_or(Error::DensityOutOfRange { index, value }))
        .collect()
}
