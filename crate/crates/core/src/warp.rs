//! Rotational warping of equirectangular frames and flow fields.
//!
//! A [`WarpMap`] built from rotation `R` stores, for every destination pixel
//! `p`, the continuous source position `project(R^-1 * lift(p))`. Sampling an
//! image through it moves content seen in direction `v` to direction `R v`.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::raster::{nearest_index, sample_bilinear, clamp_index, wrap_index, FlowField, Image, Interpolation};
use crate::sphere::{EquirectShape, PixelCoord, Rotation3, UnitVector3};

/// Precomputed per-pixel source coordinates realizing a rotation.
#[derive(Debug, Clone, PartialEq)]
pub struct WarpMap {
    shape: EquirectShape,
    rotation: Rotation3,
    src_col: Vec<f64>,
    src_row: Vec<f64>,
}

impl WarpMap {
    pub fn shape(&self) -> EquirectShape {
        self.shape
    }

    pub fn width(&self) -> usize {
        self.shape.width()
    }

    pub fn height(&self) -> usize {
        self.shape.height()
    }

    pub fn rotation(&self) -> &Rotation3 {
        &self.rotation
    }

    pub fn src_col(&self) -> &[f64] {
        &self.src_col
    }

    pub fn src_row(&self) -> &[f64] {
        &self.src_row
    }

    /// Source position of destination pixel `(col, row)`.
    pub fn source(&self, col: usize, row: usize) -> PixelCoord {
        let i = row * self.shape.width() + col;
        PixelCoord::new(self.src_col[i], self.src_row[i])
    }

    /// Source position of an arbitrary continuous destination position.
    pub fn map_point(&self, p: PixelCoord) -> PixelCoord {
        if self.rotation.is_identity() {
            return p;
        }
        let v = self.shape.lift(p.col, p.row);
        self.shape.project(self.rotation.inverse().rotate(v))
    }

    fn check_dims(&self, width: usize, height: usize) -> Result<()> {
        if width != self.shape.width() || height != self.shape.height() {
            return Err(Error::ShapeMismatch {
                left: format!("{height}x{width}"),
                right: format!("{}x{} warp map", self.shape.height(), self.shape.width()),
            });
        }
        Ok(())
    }
}

/// Builds the warp map for rotation `r` on a `width x height` raster.
pub fn build_warp_map(r: &Rotation3, width: usize, height: usize) -> Result<WarpMap> {
    let shape = EquirectShape::new(width, height)?;
    let n = shape.len();
    if r.is_identity() {
        let src_col = (0..n).map(|i| (i % width) as f64).collect();
        let src_row = (0..n).map(|i| (i / width) as f64).collect();
        return Ok(WarpMap { shape, rotation: *r, src_col, src_row });
    }
    let inv = r.inverse();
    let coords: Vec<(f64, f64)> = (0..height)
        .into_par_iter()
        .flat_map_iter(|row| {
            (0..width).map(move |col| {
                let q = shape.project(inv.rotate(shape.lift(col as f64, row as f64)));
                (q.col, q.row)
            })
        })
        .collect();
    let (src_col, src_row) = coords.into_iter().unzip();
    Ok(WarpMap { shape, rotation: *r, src_col, src_row })
}

/// The warp map of the reverse rotation.
pub fn inverse_warp(w: &WarpMap) -> WarpMap {
    build_warp_map(&w.rotation.inverse(), w.width(), w.height())
        .expect("shape was validated when the map was built")
}

/// Resamples `img` through `w`. Columns wrap, rows clamp at the poles.
pub fn warp_image(img: &Image, w: &WarpMap, interp: Interpolation) -> Result<Image> {
    w.check_dims(img.width(), img.height())?;
    let (width, height, ch) = (img.width(), img.height(), img.channels());
    let src = img.data();
    let mut out = vec![0.0f32; src.len()];
    out.par_chunks_mut(width * ch).enumerate().for_each(|(row, line)| {
        for col in 0..width {
            let q = w.source(col, row);
            let px = &mut line[col * ch..(col + 1) * ch];
            match interp {
                Interpolation::Nearest => {
                    let i = nearest_index(width, height, q.col, q.row);
                    px.copy_from_slice(&src[i * ch..(i + 1) * ch]);
                }
                Interpolation::Bilinear => {
                    for (c, value) in px.iter_mut().enumerate() {
                        *value = sample_bilinear(src, width, height, ch, c, q.col, q.row) as f32;
                    }
                }
            }
        }
    });
    Image::new(width, height, ch, out)
}

/// Re-expresses flow `f` in the frame rotated by `w.rotation()`.
///
/// Each destination pixel `p` takes its source `q`, lifts the endpoint of the
/// source flow onto the sphere, rotates it, and projects it back; the output
/// vector is that projected endpoint minus `p`, with the horizontal component
/// wrapped into `(-W/2, W/2]`. Bilinear mode blends the lifted endpoints of the
/// four neighbours of `q` on the sphere, nearest mode uses the flow of the
/// closest pixel.
pub fn warp_flow(f: &FlowField, w: &WarpMap, interp: Interpolation) -> Result<FlowField> {
    w.check_dims(f.width(), f.height())?;
    if w.rotation.is_identity() {
        return Ok(f.clone());
    }
    let shape = w.shape;
    let (width, height) = (shape.width(), shape.height());
    let rot = w.rotation;
    let (u, v) = (f.u(), f.v());
    let motion = |c: f64, r: f64, i: usize| {
        shape.lift(c + u[i] as f64, r + v[i] as f64).as_vector() - shape.lift(c, r).as_vector()
    };

    let endpoint = |q: PixelCoord| -> UnitVector3 {
        let start = shape.lift(q.col, q.row).as_vector();
        let nearest = || {
            let i = nearest_index(width, height, q.col, q.row);
            shape.lift(q.col + u[i] as f64, q.row + v[i] as f64)
        };
        match interp {
            Interpolation::Nearest => nearest(),
            Interpolation::Bilinear => {
                let c0 = q.col.floor();
                let r0 = q.row.floor();
                let fc = q.col - c0;
                let fr = q.row - r0;
                let mut acc = nalgebra::Vector3::zeros();
                for (dc, dr, wt) in [
                    (0, 0, (1.0 - fc) * (1.0 - fr)),
                    (1, 0, fc * (1.0 - fr)),
                    (0, 1, (1.0 - fc) * fr),
                    (1, 1, fc * fr),
                ] {
                    if wt == 0.0 {
                        continue;
                    }
                    let ci = c0 as i64 + dc;
                    let ri = clamp_index(r0 as i64 + dr, height);
                    let i = ri * width + wrap_index(ci, width);
                    acc += motion(ci as f64, ri as f64, i) * wt;
                }
                if acc == nalgebra::Vector3::zeros() {
                    return UnitVector3::from_vector(&start);
                }
                let e = start + acc;
                match UnitVector3::new(e.x, e.y, e.z) {
                    Ok(e) => e,
                    // antipodal endpoint; fall back to the closest sample
                    Err(_) => nearest(),
                }
            }
        }
    };

    let n = shape.len();
    let mut out_u = vec![0.0f32; n];
    let mut out_v = vec![0.0f32; n];
    out_u
        .par_chunks_mut(width)
        .zip(out_v.par_chunks_mut(width))
        .enumerate()
        .for_each(|(row, (lu, lv))| {
            for col in 0..width {
                let q = w.source(col, row);
                let target = shape.project(rot.rotate(endpoint(q)));
                lu[col] = shape.wrap_dx(target.col - col as f64) as f32;
                lv[col] = (target.row - row as f64) as f32;
            }
        });
    FlowField::new(width, height, out_u, out_v)
}

/// Flow induced on a static scene by rotating the camera frame by `r`:
/// pixel `p` moves to `project(r * lift(p))`.
pub fn flow_from_rotation(r: &Rotation3, width: usize, height: usize) -> Result<FlowField> {
    let shape = EquirectShape::new(width, height)?;
    let n = shape.len();
    let mut u = vec![0.0f32; n];
    let mut v = vec![0.0f32; n];
    if r.is_identity() {
        return FlowField::new(width, height, u, v);
    }
    u.par_chunks_mut(width).zip(v.par_chunks_mut(width)).enumerate().for_each(|(row, (lu, lv))| {
        for col in 0..width {
            let t = shape.project(r.rotate(shape.lift(col as f64, row as f64)));
            lu[col] = shape.wrap_dx(t.col - col as f64) as f32;
            lv[col] = (t.row - row as f64) as f32;
        }
    });
    FlowField::new(width, height, u, v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sphere::rotation_from_euler;
    use std::f64::consts::PI;

    #[test]
    fn identity_map_is_exact() {
        let w = build_warp_map(&Rotation3::identity(), 32, 16).unwrap();
        for row in 0..16 {
            for col in 0..32 {
                assert_eq!(w.source(col, row), PixelCoord::new(col as f64, row as f64));
            }
        }
        assert_eq!(inverse_warp(&w), w);
    }

    #[test]
    fn rejects_bad_aspect_and_mismatch() {
        assert!(build_warp_map(&Rotation3::identity(), 30, 16).is_err());
        let w = build_warp_map(&Rotation3::identity(), 32, 16).unwrap();
        let img = Image::filled(16, 8, 1, 0.0);
        assert!(matches!(warp_image(&img, &w, Interpolation::Bilinear), Err(Error::ShapeMismatch { .. })));
        let f = FlowField::zeros(16, 8);
        assert!(warp_flow(&f, &w, Interpolation::Bilinear).is_err());
    }

    #[test]
    fn constant_image_is_invariant() {
        let r = rotation_from_euler(0.3, -1.1, 2.0).unwrap();
        let w = build_warp_map(&r, 32, 16).unwrap();
        let img = Image::filled(32, 16, 3, 0.25);
        let out = warp_image(&img, &w, Interpolation::Bilinear).unwrap();
        assert!(out.data().iter().all(|&x| (x - 0.25).abs() < 1e-7));
    }

    #[test]
    fn zero_flow_stays_zero() {
        let r = rotation_from_euler(0.7, 0.2, -0.4).unwrap();
        let w = build_warp_map(&r, 32, 16).unwrap();
        let out = warp_flow(&FlowField::zeros(32, 16), &w, Interpolation::Bilinear).unwrap();
        let worst = out.u().iter().chain(out.v()).fold(0.0f32, |m, x| m.max(x.abs()));
        assert!(worst < 1e-9, "{worst}");
    }

    #[test]
    fn double_inverse_is_identical() {
        let r = rotation_from_euler(0.5, 0.1, 2.9).unwrap();
        let w = build_warp_map(&r, 32, 16).unwrap();
        let back = inverse_warp(&inverse_warp(&w));
        for (a, b) in w.src_col().iter().zip(back.src_col()) {
            assert!((a - b).abs() < 1e-9);
        }
        for (a, b) in w.src_row().iter().zip(back.src_row()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn half_turn_yaw_flow_from_rotation() {
        let r = rotation_from_euler(0.0, 0.0, PI).unwrap();
        let f = flow_from_rotation(&r, 16, 8).unwrap();
        assert!(f.u().iter().all(|&u| (u - 8.0).abs() < 1e-9));
        assert!(f.v().iter().all(|&v| v.abs() < 1e-9));
    }
}
