//! Synthetic 360-degree video: a dead-leaves scene of spherical caps seen by
//! a camera spinning at a constant rate. Frames, depth and exact
//! rotation-induced flow are consistent with each other by construction.

use std::path::Path;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{save_frame, write_depth_pfm, write_flo, DepthMap};
use crate::raster::{FlowField, Image};
use crate::sphere::{rotation_from_euler, EquirectShape, Rotation3};
use crate::warp::flow_from_rotation;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeadLeavesConfig {
    pub leaves: usize,
    /// Angular cap radii in radians.
    pub min_radius: f64,
    pub max_radius: f64,
    /// Radii follow a density proportional to `radius^-exponent`.
    pub exponent: f64,
    /// Largest per-frame camera rotation about each axis, in radians.
    pub max_step: f64,
}

impl Default for DeadLeavesConfig {
    fn default() -> Self {
        Self { leaves: 2000, min_radius: 0.05, max_radius: 1.2, exponent: 3.0, max_step: 0.05 }
    }
}

#[derive(Debug, Clone)]
struct Leaf {
    center: Vector3<f64>,
    radius: f64,
    color: [f32; 3],
    depth: f32,
}

/// A fixed set of overlapping caps; later leaves occlude earlier ones.
#[derive(Debug, Clone)]
pub struct DeadLeavesScene {
    leaves: Vec<Leaf>,
}

const BACKGROUND: [f32; 3] = [118.0, 122.0, 126.0];
const BACKGROUND_DEPTH: f32 = 20.0;

impl DeadLeavesScene {
    pub fn generate(seed: u64, cfg: &DeadLeavesConfig) -> Result<Self> {
        if !(cfg.min_radius > 0.0 && cfg.min_radius < cfg.max_radius && cfg.exponent != 1.0) {
            return Err(Error::InvalidArgument("radius range must satisfy 0 < min < max and exponent != 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let e = 1.0 - cfg.exponent;
        let (lo, hi) = (cfg.min_radius.powf(e), cfg.max_radius.powf(e));
        let n = cfg.leaves;
        let leaves = (0..n)
            .map(|i| {
                let z: f64 = rng.random_range(-1.0..1.0);
                let phi: f64 = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
                let s = (1.0 - z * z).sqrt();
                let radius = (lo + rng.random::<f64>() * (hi - lo)).powf(1.0 / e);
                let gray: f32 = rng.random_range(10.0..245.0);
                let tint = [rng.random_range(-0.12..0.12), rng.random_range(-0.12..0.12), rng.random_range(-0.12..0.12)];
                let color = tint.map(|t: f32| (gray * (1.0 + t)).clamp(0.0, 255.0));
                Leaf {
                    center: Vector3::new(s * phi.cos(), s * phi.sin(), z),
                    radius,
                    color,
                    depth: 1.0 + 9.0 * (1.0 - i as f32 / n as f32),
                }
            })
            .collect();
        Ok(Self { leaves })
    }

    pub fn len(&self) -> usize {
        self.leaves.len()
    }

    pub fn is_empty(&self) -> bool {
        self.leaves.is_empty()
    }

    /// Renders the view of a camera whose pixel directions map to world
    /// directions through `camera`.
    pub fn render(&self, camera: &Rotation3, width: usize, height: usize) -> Result<(Image, DepthMap)> {
        let shape = EquirectShape::new(width, height)?;
        let dirs: Vec<Vector3<f64>> = (0..shape.len())
            .map(|i| shape.lift((i % width) as f64, (i / width) as f64).as_vector())
            .collect();
        let mut rgb = vec![0.0f32; 3 * shape.len()];
        for px in rgb.chunks_exact_mut(3) {
            px.copy_from_slice(&BACKGROUND);
        }
        let mut depth = vec![BACKGROUND_DEPTH; shape.len()];
        let to_camera = camera.inverse();
        let (pi, h) = (std::f64::consts::PI, height as f64);
        for leaf in &self.leaves {
            let c = to_camera.rotate_vector(&leaf.center);
            let colat = c.z.clamp(-1.0, 1.0).acos();
            let cos_r = leaf.radius.cos();
            let top = ((colat - leaf.radius) / pi * h - 0.5).floor().max(0.0) as usize;
            let bottom = (((colat + leaf.radius) / pi * h - 0.5).ceil().max(0.0) as usize).min(height - 1);
            let wraps_pole = colat - leaf.radius <= 0.0 || colat + leaf.radius >= pi;
            let half_span = if wraps_pole || leaf.radius.sin() >= colat.sin() {
                width
            } else {
                let dphi = (leaf.radius.sin() / colat.sin()).asin();
                ((dphi / (2.0 * pi) * width as f64).ceil() as usize + 1).min(width)
            };
            let center_col = ((c.y.atan2(c.x) + pi) / (2.0 * pi) * width as f64 - 0.5).round() as i64;
            for row in top..=bottom {
                let cols: Box<dyn Iterator<Item = usize>> = if 2 * half_span + 1 >= width {
                    Box::new(0..width)
                } else {
                    let w = width as i64;
                    let hs = half_span as i64;
                    Box::new((center_col - hs..=center_col + hs).map(move |k| k.rem_euclid(w) as usize))
                };
                for col in cols {
                    let i = row * width + col;
                    if dirs[i].dot(&c) >= cos_r {
                        rgb[3 * i..3 * i + 3].copy_from_slice(&leaf.color);
                        depth[i] = leaf.depth;
                    }
                }
            }
        }
        Ok((Image::new(width, height, 3, rgb)?, DepthMap::new(width, height, depth)?))
    }
}

/// Frames, depth maps and forward/backward flows of one synthetic video.
#[derive(Debug, Clone)]
pub struct SyntheticVideo {
    pub frames: Vec<Image>,
    pub depth: Vec<DepthMap>,
    /// `flow_fw[t]` maps frame `t` to frame `t + 1`.
    pub flow_fw: Vec<FlowField>,
    /// `flow_bw[t]` maps frame `t + 1` back to frame `t`.
    pub flow_bw: Vec<FlowField>,
    /// Per-frame camera step as (pitch, roll, yaw).
    pub step: [f64; 3],
}

/// Renders `frames` views of one scene under a constant per-frame rotation.
pub fn synthetic_video(seed: u64, frames: usize, width: usize, height: usize, cfg: &DeadLeavesConfig) -> Result<SyntheticVideo> {
    if frames == 0 {
        return Err(Error::InvalidArgument("a video needs at least one frame".into()));
    }
    let scene = DeadLeavesScene::generate(seed, cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(0x5eed));
    let step = [(); 3].map(|_| rng.random_range(-cfg.max_step..=cfg.max_step));
    let q = rotation_from_euler(step[0], step[1], step[2])?;
    let mut pose = Rotation3::identity();
    let mut video = SyntheticVideo { frames: Vec::new(), depth: Vec::new(), flow_fw: Vec::new(), flow_bw: Vec::new(), step };
    for _ in 0..frames {
        let (img, d) = scene.render(&pose, width, height)?;
        video.frames.push(img);
        video.depth.push(d);
        pose = pose.compose(&q);
    }
    if frames > 1 {
        // camera-to-world poses A_t = Q^t, so a direction seen at lift(p)
        // in frame t is seen at Q^-1 lift(p) in frame t + 1
        let fw = flow_from_rotation(&q.inverse(), width, height)?;
        let bw = flow_from_rotation(&q, width, height)?;
        video.flow_fw = vec![fw; frames - 1];
        video.flow_bw = vec![bw; frames - 1];
    }
    Ok(video)
}

/// Writes a video in the dataset layout understood by
/// [`index_dataset`](crate::io::index_dataset).
pub fn write_video(dir: impl AsRef<Path>, video: &SyntheticVideo) -> Result<()> {
    let dir = dir.as_ref();
    for sub in ["frames", "flow_fw", "flow_bw", "depth"] {
        let p = dir.join(sub);
        std::fs::create_dir_all(&p).map_err(|e| Error::io(&p, e))?;
    }
    let stem = |t: usize| format!("{t:04}");
    for (t, (img, d)) in video.frames.iter().zip(&video.depth).enumerate() {
        save_frame(img, dir.join("frames").join(format!("{}.png", stem(t))))?;
        write_depth_pfm(d, dir.join("depth").join(format!("{}.pfm", stem(t))))?;
    }
    for (t, (fw, bw)) in video.flow_fw.iter().zip(&video.flow_bw).enumerate() {
        write_flo(fw, dir.join("flow_fw").join(format!("{}.flo", stem(t))))?;
        write_flo(bw, dir.join("flow_bw").join(format!("{}.flo", stem(t + 1))))?;
    }
    Ok(())
}
