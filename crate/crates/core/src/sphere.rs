//! Coordinate transforms between the equirectangular raster, angular
//! coordinates, the unit sphere and the catadioptric plane, plus rotations.
//!
//! Angular convention: `theta` is latitude in `[-pi/2, pi/2]` (row 0 is
//! `-pi/2`), `phi` is azimuth in `[-pi, pi)`. The sphere lift evaluates
//! `(sin t cos phi, sin t sin phi, cos t)` at the colatitude `t = theta + pi/2`,
//! so the top raster row sits at `z = +1` and the bottom row at `z = -1`.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Latitude/azimuth pair in radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AngularCoord {
    pub theta: f64,
    pub phi: f64,
}

impl AngularCoord {
    pub fn new(theta: f64, phi: f64) -> Self {
        Self { theta, phi }
    }

    /// Builds a coordinate from colatitude `t` in `[0, pi]`.
    pub fn from_colatitude(colatitude: f64, phi: f64) -> Self {
        Self { theta: colatitude - FRAC_PI_2, phi }
    }

    /// Colatitude `theta + pi/2`, the argument of the sphere lift.
    pub fn colatitude(&self) -> f64 {
        self.theta + FRAC_PI_2
    }
}

/// A point on the unit sphere.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnitVector3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl UnitVector3 {
    /// Normalizes `(x, y, z)`. Fails on the zero vector or non-finite input.
    pub fn new(x: f64, y: f64, z: f64) -> Result<Self> {
        let n = (x * x + y * y + z * z).sqrt();
        if !n.is_finite() || n == 0.0 {
            return Err(Error::ZeroNorm);
        }
        Ok(Self { x: x / n, y: y / n, z: z / n })
    }

    /// Wraps components that are already of unit length.
    pub const fn new_unchecked(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn as_vector(&self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }

    pub fn from_vector(v: &Vector3<f64>) -> Self {
        Self { x: v.x, y: v.y, z: v.z }
    }

    pub fn norm(&self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn dot(&self, other: &UnitVector3) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    /// Great-circle angle to `other`, stable for tiny and near-antipodal angles.
    pub fn angle_to(&self, other: &UnitVector3) -> f64 {
        let a = self.as_vector();
        let b = other.as_vector();
        a.cross(&b).norm().atan2(a.dot(&b))
    }

    /// True when the azimuth is undefined (the vector lies on the z axis).
    pub fn is_pole(&self) -> bool {
        self.x == 0.0 && self.y == 0.0
    }
}

/// Lifts angular coordinates onto the unit sphere.
pub fn angles_to_sphere(a: AngularCoord) -> UnitVector3 {
    let t = a.colatitude();
    let (st, ct) = t.sin_cos();
    let (sp, cp) = a.phi.sin_cos();
    UnitVector3::new_unchecked(st * cp, st * sp, ct)
}

/// Inverse of [`angles_to_sphere`]. At the poles the azimuth is 0.
pub fn sphere_to_angles(v: UnitVector3) -> AngularCoord {
    // atan2 form keeps full precision near the poles where acos(z) does not.
    let rho = v.x.hypot(v.y);
    let colatitude = rho.atan2(v.z);
    let phi = if rho == 0.0 { 0.0 } else { v.y.atan2(v.x) };
    AngularCoord::from_colatitude(colatitude, phi)
}

/// Projects a sphere point onto the catadioptric plane, `(x/(1-z), y/(1-z))`.
pub fn sphere_to_catadioptric(v: UnitVector3) -> Result<(f64, f64)> {
    let denom = 1.0 - v.z;
    if denom <= 0.0 {
        return Err(Error::ProjectionPole);
    }
    Ok((v.x / denom, v.y / denom))
}

/// Cotangent form of the catadioptric projection, `(cot(t/2) cos phi, cot(t/2) sin phi)`
/// with `t` the colatitude.
pub fn catadioptric_from_angles(a: AngularCoord) -> Result<(f64, f64)> {
    let half = a.colatitude() / 2.0;
    let s = half.sin();
    if s == 0.0 {
        return Err(Error::ProjectionPole);
    }
    let cot = half.cos() / s;
    Ok((cot * a.phi.cos(), cot * a.phi.sin()))
}

/// Euler angles in radians. Pitch turns about X, roll about Y, yaw about Z.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EulerAngles {
    pub pitch: f64,
    pub roll: f64,
    pub yaw: f64,
}

impl EulerAngles {
    pub const ZERO: EulerAngles = EulerAngles { pitch: 0.0, roll: 0.0, yaw: 0.0 };

    pub fn new(pitch: f64, roll: f64, yaw: f64) -> Self {
        Self { pitch, roll, yaw }
    }

    pub fn is_zero(&self) -> bool {
        self.pitch == 0.0 && self.roll == 0.0 && self.yaw == 0.0
    }

    pub fn to_rotation(&self) -> Result<Rotation3> {
        rotation_from_euler(self.pitch, self.roll, self.yaw)
    }
}

/// A proper rotation of 3-space acting on column vectors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation3 {
    matrix: Matrix3<f64>,
}

impl Rotation3 {
    pub fn identity() -> Self {
        Self { matrix: Matrix3::identity() }
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.matrix
    }

    /// The inverse rotation (the transpose).
    pub fn inverse(&self) -> Self {
        Self { matrix: self.matrix.transpose() }
    }

    /// `self` applied after `first`.
    pub fn compose(&self, first: &Rotation3) -> Self {
        Self { matrix: self.matrix * first.matrix }
    }

    pub fn rotate(&self, v: UnitVector3) -> UnitVector3 {
        UnitVector3::from_vector(&(self.matrix * v.as_vector()))
    }

    pub fn rotate_vector(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.matrix * v
    }

    /// Exact comparison against the identity matrix.
    pub fn is_identity(&self) -> bool {
        self.matrix == Matrix3::identity()
    }
}

impl Default for Rotation3 {
    fn default() -> Self {
        Self::identity()
    }
}

/// Builds `Yaw(Z) * Pitch(X) * Roll(Y)`; roll is applied first.
pub fn rotation_from_euler(pitch: f64, roll: f64, yaw: f64) -> Result<Rotation3> {
    if !(pitch.is_finite() && roll.is_finite() && yaw.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "non-finite rotation angles (pitch={pitch}, roll={roll}, yaw={yaw})"
        )));
    }
    let (sp, cp) = pitch.sin_cos();
    let (sr, cr) = roll.sin_cos();
    let (sy, cy) = yaw.sin_cos();
    #[rustfmt::skip]
    let rx = Matrix3::new(
        1.0, 0.0, 0.0,
        0.0, cp, -sp,
        0.0, sp, cp,
    );
    #[rustfmt::skip]
    let ry = Matrix3::new(
        cr, 0.0, sr,
        0.0, 1.0, 0.0,
        -sr, 0.0, cr,
    );
    #[rustfmt::skip]
    let rz = Matrix3::new(
        cy, -sy, 0.0,
        sy, cy, 0.0,
        0.0, 0.0, 1.0,
    );
    Ok(Rotation3 { matrix: rz * rx * ry })
}

/// Continuous raster position. Pixel `i` has its center at `i`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PixelCoord {
    pub col: f64,
    pub row: f64,
}

impl PixelCoord {
    pub fn new(col: f64, row: f64) -> Self {
        Self { col, row }
    }
}

/// Dimensions of an equirectangular raster (`width == 2 * height`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EquirectShape {
    width: usize,
    height: usize,
}

impl EquirectShape {
    pub fn new(width: usize, height: usize) -> Result<Self> {
        if height == 0 || width != 2 * height {
            return Err(Error::Aspect { width, height });
        }
        Ok(Self { width, height })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `phi = (col + 0.5) / W * 2pi - pi`, `theta = (row + 0.5) / H * pi - pi/2`.
    pub fn pixel_to_angles(&self, p: PixelCoord) -> AngularCoord {
        let phi = (p.col + 0.5) / self.width as f64 * TAU - PI;
        let theta = (p.row + 0.5) / self.height as f64 * PI - FRAC_PI_2;
        AngularCoord { theta, phi }
    }

    /// Inverse of [`pixel_to_angles`](Self::pixel_to_angles). The column is
    /// wrapped into `[-0.5, W - 0.5)`, the pixel-centered horizontal period.
    pub fn angles_to_pixel(&self, a: AngularCoord) -> PixelCoord {
        let w = self.width as f64;
        let col = (a.phi + PI) / TAU * w - 0.5;
        let row = (a.theta + FRAC_PI_2) / PI * self.height as f64 - 0.5;
        PixelCoord { col: wrap_col(col, w), row }
    }

    /// Pixel position to sphere point.
    pub fn lift(&self, col: f64, row: f64) -> UnitVector3 {
        angles_to_sphere(self.pixel_to_angles(PixelCoord { col, row }))
    }

    /// Sphere point to pixel position.
    pub fn project(&self, v: UnitVector3) -> PixelCoord {
        self.angles_to_pixel(sphere_to_angles(v))
    }

    /// Derivatives of [`lift`](Self::lift) with respect to column and row.
    pub fn lift_jacobian(&self, col: f64, row: f64) -> (Vector3<f64>, Vector3<f64>) {
        let a = self.pixel_to_angles(PixelCoord { col, row });
        let (st, ct) = a.colatitude().sin_cos();
        let (sp, cp) = a.phi.sin_cos();
        let dphi = TAU / self.width as f64;
        let dtheta = PI / self.height as f64;
        (
            Vector3::new(-st * sp, st * cp, 0.0) * dphi,
            Vector3::new(ct * cp, ct * sp, -st) * dtheta,
        )
    }

    /// Wraps a horizontal displacement into `(-W/2, W/2]`.
    pub fn wrap_dx(&self, dx: f64) -> f64 {
        let w = self.width as f64;
        let mut d = dx.rem_euclid(w);
        if d > w / 2.0 {
            d -= w;
        }
        d
    }
}

fn wrap_col(col: f64, width: f64) -> f64 {
    if (-0.5..width - 0.5).contains(&col) {
        col
    } else {
        let c = (col + 0.5).rem_euclid(width) - 0.5;
        // rem_euclid can round up to exactly `width`.
        if c >= width - 0.5 {
            c - width
        } else {
            c
        }
    }
}
