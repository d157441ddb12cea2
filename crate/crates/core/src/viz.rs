//! Flow color encodings: the Middlebury color wheel for in-plane flow and an
//! RGBA encoding of motion on the unit sphere.

use image::{Rgb, RgbImage, Rgba, RgbaImage};
use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::raster::FlowField;
use crate::sphere::EquirectShape;

/// Default clipping magnitude for flow visualization, in pixels.
pub const DEFAULT_CLIP: f64 = 40.0;

const RY: usize = 15;
const YG: usize = 6;
const GC: usize = 4;
const CB: usize = 11;
const BM: usize = 13;
const MR: usize = 6;
const NCOLS: usize = RY + YG + GC + CB + BM + MR;

/// The 55-entry Middlebury color wheel (RY, YG, GC, CB, BM, MR).
pub fn color_wheel() -> [[f64; 3]; NCOLS] {
    let mut wheel = [[0.0; 3]; NCOLS];
    let ramp = |i: usize, n: usize| (255 * i / n) as f64;
    let mut k = 0;
    for i in 0..RY {
        wheel[k] = [255.0, ramp(i, RY), 0.0];
        k += 1;
    }
    for i in 0..YG {
        wheel[k] = [255.0 - ramp(i, YG), 255.0, 0.0];
        k += 1;
    }
    for i in 0..GC {
        wheel[k] = [0.0, 255.0, ramp(i, GC)];
        k += 1;
    }
    for i in 0..CB {
        wheel[k] = [0.0, 255.0 - ramp(i, CB), 255.0];
        k += 1;
    }
    for i in 0..BM {
        wheel[k] = [ramp(i, BM), 0.0, 255.0];
        k += 1;
    }
    for i in 0..MR {
        wheel[k] = [255.0, 0.0, 255.0 - ramp(i, MR)];
        k += 1;
    }
    wheel
}

/// Color of a flow vector already divided by the clip magnitude. Hue follows
/// direction; saturation grows with magnitude and saturates at 1.
pub fn wheel_color(wheel: &[[f64; 3]; NCOLS], u: f64, v: f64) -> [u8; 3] {
    let rad = u.hypot(v).min(1.0);
    if rad == 0.0 || !rad.is_finite() {
        return [255, 255, 255];
    }
    let a = (-v).atan2(-u) / std::f64::consts::PI;
    let fk = (a + 1.0) / 2.0 * (NCOLS - 1) as f64;
    let k0 = fk.floor() as usize % NCOLS;
    let k1 = (k0 + 1) % NCOLS;
    let f = fk - fk.floor();
    let mut out = [0u8; 3];
    for c in 0..3 {
        let col = ((1.0 - f) * wheel[k0][c] + f * wheel[k1][c]) / 255.0;
        let col = 1.0 - rad * (1.0 - col);
        out[c] = (255.0 * col).round().clamp(0.0, 255.0) as u8;
    }
    out
}

/// Middlebury-style RGB rendering with magnitudes normalized by `clip`.
pub fn encode_flow_rgb(f: &FlowField, clip: f64) -> Result<RgbImage> {
    if !(clip > 0.0 && clip.is_finite()) {
        return Err(crate::Error::InvalidArgument(format!("clip must be positive, got {clip}")));
    }
    let wheel = color_wheel();
    let (w, h) = (f.width() as u32, f.height() as u32);
    Ok(RgbImage::from_fn(w, h, |x, y| {
        let (u, v) = f.at(x as usize, y as usize);
        Rgb(wheel_color(&wheel, u as f64 / clip, v as f64 / clip))
    }))
}

/// Per-pixel displacement between the lifted endpoints of a flow field.
#[derive(Debug, Clone, PartialEq)]
pub struct SphereMotionField {
    width: usize,
    height: usize,
    motion: Vec<Vector3<f64>>,
}

impl SphereMotionField {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn motion(&self) -> &[Vector3<f64>] {
        &self.motion
    }
}

/// Lifts every pixel `p` and its endpoint `p + f(p)` to the sphere and
/// returns the chord between them.
pub fn flow_to_sphere_motion(f: &FlowField) -> Result<SphereMotionField> {
    let shape = f.equirect_shape()?;
    let motion = (0..shape.len())
        .into_par_iter()
        .map(|i| endpoint_chord(&shape, f, i))
        .collect();
    Ok(SphereMotionField { width: shape.width(), height: shape.height(), motion })
}

fn endpoint_chord(shape: &EquirectShape, f: &FlowField, i: usize) -> Vector3<f64> {
    let (col, row) = ((i % shape.width()) as f64, (i / shape.width()) as f64);
    let start = shape.lift(col, row).as_vector();
    let end = shape.lift(col + f.u()[i] as f64, row + f.v()[i] as f64).as_vector();
    end - start
}

/// RGBA rendering of sphere motion plus its normalization constants.
#[derive(Debug, Clone)]
pub struct SphereEncoding {
    pub image: RgbaImage,
    /// Largest in-plane `(x, y)` magnitude, used to normalize the hue wheel.
    pub max_xy: f64,
    /// Largest `|z|`, mapped to alpha 0 (for `-max`) and 255 (for `+max`).
    pub max_abs_z: f64,
}

/// RGB from the `(x, y)` components via the color wheel, alpha from `z`
/// mapped affinely from `[-max|z|, max|z|]` to `[0, 255]`.
pub fn encode_sphere_rgba(m: &SphereMotionField) -> SphereEncoding {
    let wheel = color_wheel();
    let max_xy = m.motion.iter().map(|v| v.x.hypot(v.y)).fold(0.0, f64::max);
    let max_abs_z = m.motion.iter().map(|v| v.z.abs()).fold(0.0, f64::max);
    let image = RgbaImage::from_fn(m.width as u32, m.height as u32, |x, y| {
        let v = m.motion[y as usize * m.width + x as usize];
        let [r, g, b] = if max_xy > 0.0 {
            wheel_color(&wheel, v.x / max_xy, v.y / max_xy)
        } else {
            [255, 255, 255]
        };
        let z = if max_abs_z > 0.0 { v.z / max_abs_z } else { 0.0 };
        let alpha = ((z + 1.0) / 2.0 * 255.0).round().clamp(0.0, 255.0) as u8;
        Rgba([r, g, b, alpha])
    });
    SphereEncoding { image, max_xy, max_abs_z }
}

/// Metadata written next to a rendered sphere encoding.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SphereEncodingMeta {
    pub max_xy: f64,
    pub max_abs_z: f64,
}

impl From<&SphereEncoding> for SphereEncodingMeta {
    fn from(e: &SphereEncoding) -> Self {
        Self { max_xy: e.max_xy, max_abs_z: e.max_abs_z }
    }
}
