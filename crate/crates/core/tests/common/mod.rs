//! Independent reference implementations used as test oracles. Nothing here
//! calls into the geometry of the library under test.

#![allow(dead_code)]

use std::f64::consts::PI;

use omniflow::{FlowField, Image};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::{num_complex::Complex, FftPlanner};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Pixel center to sphere, written with latitude measured from the equator
/// (positive towards row 0) instead of the colatitude form.
pub fn lift(col: f64, row: f64, w: usize, h: usize) -> [f64; 3] {
    let lon = (col + 0.5) * 2.0 * PI / w as f64 - PI;
    let lat = PI / 2.0 - (row + 0.5) * PI / h as f64;
    [lat.cos() * lon.cos(), lat.cos() * lon.sin(), lat.sin()]
}

/// Sphere to continuous pixel position, column in `[-0.5, w - 0.5)`.
pub fn project(v: [f64; 3], w: usize, h: usize) -> (f64, f64) {
    let lat = v[2].clamp(-1.0, 1.0).asin();
    let lon = v[1].atan2(v[0]);
    let mut col = (lon + PI) * w as f64 / (2.0 * PI) - 0.5;
    if col >= w as f64 - 0.5 {
        col -= w as f64;
    }
    let row = (PI / 2.0 - lat) * h as f64 / PI - 0.5;
    (col, row)
}

pub fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

pub fn norm(a: [f64; 3]) -> f64 {
    dot(a, a).sqrt()
}

/// Great-circle angle between two unit vectors.
pub fn great_circle(a: [f64; 3], b: [f64; 3]) -> f64 {
    norm(cross(a, b)).atan2(dot(a, b))
}

/// Rotation about one coordinate axis (0 = X, 1 = Y, 2 = Z).
pub fn axis_rotation(axis: usize, angle: f64) -> [[f64; 3]; 3] {
    let (s, c) = angle.sin_cos();
    let mut m = [[0.0; 3]; 3];
    let (i, j) = ((axis + 1) % 3, (axis + 2) % 3);
    m[axis][axis] = 1.0;
    m[i][i] = c;
    m[j][j] = c;
    m[i][j] = -s;
    m[j][i] = s;
    m
}

pub fn matmul(a: [[f64; 3]; 3], b: [[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let mut m = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            m[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    m
}

pub fn apply(m: [[f64; 3]; 3], v: [f64; 3]) -> [f64; 3] {
    [dot(m[0], v), dot(m[1], v), dot(m[2], v)]
}

/// Yaw about Z after pitch about X after roll about Y.
pub fn euler_matrix(pitch: f64, roll: f64, yaw: f64) -> [[f64; 3]; 3] {
    matmul(axis_rotation(2, yaw), matmul(axis_rotation(0, pitch), axis_rotation(1, roll)))
}

pub fn random_image(w: usize, h: usize, channels: usize, seed: u64) -> Image {
    let mut r = rng(seed);
    let data = (0..w * h * channels).map(|_| r.random_range(0.0f32..255.0)).collect();
    Image::new(w, h, channels, data).unwrap()
}

pub fn random_flow(w: usize, h: usize, scale: f32, seed: u64) -> FlowField {
    let mut r = rng(seed);
    FlowField::from_fn(w, h, |_, _| (r.random_range(-scale..scale), r.random_range(-scale..scale)))
}

/// Smooth flow made of a few low-frequency harmonics.
pub fn smooth_flow(w: usize, h: usize, amplitude: f64) -> FlowField {
    FlowField::from_fn(w, h, |c, r| {
        let x = c as f64 / w as f64 * 2.0 * PI;
        let y = r as f64 / h as f64 * PI;
        let u = amplitude * (x.sin() * y.sin() + 0.3 * (2.0 * x).cos());
        let v = amplitude * 0.5 * (x.cos() * (2.0 * y).sin());
        (u as f32, v as f32)
    })
}

/// Explicit circular shift: output column `c` holds input column `c - k`.
pub fn roll_columns(img: &Image, k: i64) -> Image {
    let (w, ch) = (img.width() as i64, img.channels());
    Image::from_fn(img.width(), img.height(), ch, |c, r, k2| {
        let src = (c as i64 - k).rem_euclid(w) as usize;
        img.get(src, r, k2)
    })
}

/// Gray frames whose power spectrum falls as `1/f^2`, built by shaping
/// random phases in the frequency domain.
pub fn pink_frames(n: usize, size: usize, seed: u64) -> Vec<Image> {
    let mut r = rng(seed);
    let mut planner = FftPlanner::<f64>::new();
    let ifft = planner.plan_fft_inverse(size);
    (0..n)
        .map(|_| {
            let mut buf: Vec<Complex<f64>> = (0..size * size)
                .map(|i| {
                    let (ky, kx) = (i / size, i % size);
                    let fy = if ky <= size / 2 { ky as f64 } else { ky as f64 - size as f64 };
                    let fx = if kx <= size / 2 { kx as f64 } else { kx as f64 - size as f64 };
                    let f = fx.hypot(fy);
                    if f == 0.0 {
                        return Complex::new(0.0, 0.0);
                    }
                    let phase = r.random_range(0.0..2.0 * PI);
                    Complex::from_polar(1.0 / f, phase)
                })
                .collect();
            for row in buf.chunks_exact_mut(size) {
                ifft.process(row);
            }
            let mut col = vec![Complex::new(0.0, 0.0); size];
            for c in 0..size {
                for rr in 0..size {
                    col[rr] = buf[rr * size + c];
                }
                ifft.process(&mut col);
                for rr in 0..size {
                    buf[rr * size + c] = col[rr];
                }
            }
            let re: Vec<f64> = buf.iter().map(|z| z.re).collect();
            let sd = (re.iter().map(|x| x * x).sum::<f64>() / re.len() as f64).sqrt();
            let data = re.iter().map(|x| (128.0 + 30.0 * x / sd) as f32).collect();
            Image::new(size, size, 1, data).unwrap()
        })
        .collect()
}

pub fn white_frames(n: usize, size: usize, seed: u64) -> Vec<Image> {
    let mut r = rng(seed);
    (0..n)
        .map(|_| {
            let data = (0..size * size).map(|_| r.random_range(0.0f32..255.0)).collect();
            Image::new(size, size, 1, data).unwrap()
        })
        .collect()
}

/// Raw density at an equirectangular pixel, computed from the closed-form
/// face formulas and a bilinear lookup on a `size x size` node grid.
pub fn raw_density(col: usize, row: usize, w: usize, h: usize, size: usize) -> f64 {
    let v = lift(col as f64, row as f64, w, h);
    let a = v.map(f64::abs);
    let (polar, fx, fy) = if a[2] >= a[0] && a[2] >= a[1] {
        (true, v[0] / a[2], v[1] / a[2])
    } else if a[0] >= a[1] {
        (false, v[1] / a[0], v[2] / a[0])
    } else {
        (false, v[0] / a[1], v[2] / a[1])
    };
    let node = |i: usize| -1.0 + 2.0 * i as f64 / (size - 1) as f64;
    let face = |x: f64, y: f64| {
        let r = (x * x + y * y).sqrt() / 2f64.sqrt();
        if polar {
            1.0 - r
        } else {
            r
        }
    };
    let s = (size - 1) as f64;
    let gx = ((fx + 1.0) * 0.5 * s).clamp(0.0, s);
    let gy = ((fy + 1.0) * 0.5 * s).clamp(0.0, s);
    let (x0, y0) = ((gx as usize).min(size - 2), (gy as usize).min(size - 2));
    let (tx, ty) = (gx - x0 as f64, gy - y0 as f64);
    let f00 = face(node(x0), node(y0));
    let f10 = face(node(x0 + 1), node(y0));
    let f01 = face(node(x0), node(y0 + 1));
    let f11 = face(node(x0 + 1), node(y0 + 1));
    (f00 * (1.0 - tx) + f10 * tx) * (1.0 - ty) + (f01 * (1.0 - tx) + f11 * tx) * ty
}
