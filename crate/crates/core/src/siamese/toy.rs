//! A small deterministic encoder standing in for a learned flow network, and
//! the full two-stream pipeline built on it with hand-derived gradients.
//!
//! Stream `s` with rotation `r`: rotate both frames, run the iterative flow
//! head, lift the final flow to sphere motion, rotate it back to the
//! canonical frame, pool to an 8x16 grid and project to a latent `z`. The
//! predictor MLP maps `z` to `p`.

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{cosine_distance_grad, sequence_weights, AugmentationPair, DEFAULT_GAMMA};
use crate::error::{Error, Result};
use crate::raster::{clamp_index, wrap_index, FlowField, Image, Interpolation};
use crate::sphere::{EquirectShape, Rotation3};
use crate::warp::{build_warp_map, warp_flow, warp_image};

/// Pooled feature grid (rows, cols).
pub const POOL: (usize, usize) = (8, 16);

/// Output of an encoder: the refinement sequence and a latent vector.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderOutput {
    pub flows: Vec<FlowField>,
    pub latent: Vec<f64>,
}

/// Plug-in boundary for flow encoders used by the two-stream objective.
///
/// `encode` receives a frame pair already rotated by `rotation` and must
/// return exactly [`iterations`](Self::iterations) flow fields on the same
/// equirectangular grid, plus a latent expressed in the un-rotated frame
/// (the encoder undoes `rotation` before pooling).
pub trait SiameseEncoder: Send + Sync {
    fn iterations(&self) -> usize;
    fn latent_dim(&self) -> usize;
    fn encode(&self, first: &Image, second: &Image, rotation: &Rotation3) -> Result<EncoderOutput>;
}

/// Horizontal (wrapped) and vertical (clamped) central differences of `g`,
/// multiplied by the negated 3x3-averaged frame difference.
struct Drive {
    shape: EquirectShape,
    x: Vec<f64>,
    y: Vec<f64>,
}

fn gray64(img: &Image) -> Vec<f64> {
    img.to_gray().into_iter().map(f64::from).collect()
}

fn drive(first: &Image, second: &Image) -> Result<Drive> {
    if first.width() != second.width() || first.height() != second.height() {
        return Err(Error::ShapeMismatch {
            left: format!("{}x{}", first.height(), first.width()),
            right: format!("{}x{}", second.height(), second.width()),
        });
    }
    let shape = first.equirect_shape()?;
    let (w, h) = (shape.width(), shape.height());
    let g = gray64(first);
    let diff: Vec<f64> = gray64(second).iter().zip(&g).map(|(b, a)| b - a).collect();
    let at = |buf: &[f64], c: i64, r: i64| buf[clamp_index(r, h) * w + wrap_index(c, w)];
    let mut x = vec![0.0; w * h];
    let mut y = vec![0.0; w * h];
    for r in 0..h as i64 {
        for c in 0..w as i64 {
            let mut e = 0.0;
            for dr in -1..=1 {
                for dc in -1..=1 {
                    e += at(&diff, c + dc, r + dr);
                }
            }
            e /= 9.0;
            let gx = (at(&g, c + 1, r) - at(&g, c - 1, r)) / 2.0;
            let gy = (at(&g, c, r + 1) - at(&g, c, r - 1)) / 2.0;
            let i = r as usize * w + c as usize;
            x[i] = -e * gx;
            y[i] = -e * gy;
        }
    }
    Ok(Drive { shape, x, y })
}

/// Flow iterates `u_0 = 0, u_i = u_{i-1} + tanh(a_i * drive - b_i * u_{i-1})`
/// (same for `v`), plus the tanh values for the backward pass.
struct Iterates {
    u: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    tu: Vec<Vec<f64>>,
    tv: Vec<Vec<f64>>,
}

/// Bilinear taps of one canonical pixel into the rotated grid.
type Taps = [(usize, f64); 4];

/// The iterative toy flow head with a fixed random projection to the latent.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyEncoder {
    iterations: usize,
    latent_dim: usize,
    /// `[a_1..a_n, b_1..b_n]`.
    params: Vec<f64>,
    /// Row-major `latent_dim x (3 * 8 * 16)`.
    projection: Vec<f64>,
}

impl Default for ToyEncoder {
    fn default() -> Self {
        Self::new(4, 16, 0)
    }
}

impl ToyEncoder {
    pub fn new(iterations: usize, latent_dim: usize, seed: u64) -> Self {
        let features = 3 * POOL.0 * POOL.1;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = 1.0 / (features as f64).sqrt();
        let projection = (0..latent_dim * features)
            .map(|_| scale * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng))
            .collect();
        let mut params = vec![0.5; iterations];
        params.extend(vec![0.2; iterations]);
        Self { iterations, latent_dim, params, projection }
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn set_params(&mut self, params: Vec<f64>) -> Result<()> {
        if params.len() != 2 * self.iterations {
            return Err(Error::InvalidArgument(format!(
                "expected {} parameters, got {}",
                2 * self.iterations,
                params.len()
            )));
        }
        self.params = params;
        Ok(())
    }

    fn iterate(&self, d: &Drive) -> Iterates {
        let n = d.x.len();
        let mut it = Iterates { u: vec![vec![0.0; n]], v: vec![vec![0.0; n]], tu: Vec::new(), tv: Vec::new() };
        for i in 0..self.iterations {
            let (a, b) = (self.params[i], self.params[self.iterations + i]);
            let step = |prev: &[f64], drive: &[f64]| -> (Vec<f64>, Vec<f64>) {
                let t: Vec<f64> = prev.iter().zip(drive).map(|(p, x)| (a * x - b * p).tanh()).collect();
                let next = prev.iter().zip(&t).map(|(p, t)| p + t).collect();
                (next, t)
            };
            let (nu, tu) = step(&it.u[i], &d.x);
            let (nv, tv) = step(&it.v[i], &d.y);
            it.u.push(nu);
            it.v.push(nv);
            it.tu.push(tu);
            it.tv.push(tv);
        }
        it
    }

    fn taps(shape: &EquirectShape, rotation: &Rotation3) -> Result<Vec<Taps>> {
        let back = build_warp_map(&rotation.inverse(), shape.width(), shape.height())?;
        let (w, h) = (shape.width(), shape.height());
        Ok((0..shape.len())
            .map(|p| {
                let q = back.source(p % w, p / w);
                let (c0, r0) = (q.col.floor(), q.row.floor());
                let (fc, fr) = (q.col - c0, q.row - r0);
                let idx = |dc: i64, dr: i64| clamp_index(r0 as i64 + dr, h) * w + wrap_index(c0 as i64 + dc, w);
                [
                    (idx(0, 0), (1.0 - fc) * (1.0 - fr)),
                    (idx(1, 0), fc * (1.0 - fr)),
                    (idx(0, 1), (1.0 - fc) * fr),
                    (idx(1, 1), fc * fr),
                ]
            })
            .collect())
    }

    fn pool_bins(shape: &EquirectShape) -> Result<Vec<usize>> {
        let (w, h) = (shape.width(), shape.height());
        if h < POOL.0 || w < POOL.1 {
            return Err(Error::InvalidArgument(format!("frames must be at least {}x{}", POOL.0, POOL.1)));
        }
        Ok((0..shape.len()).map(|p| ((p / w) * POOL.0 / h) * POOL.1 + (p % w) * POOL.1 / w).collect())
    }

    /// Motion on the sphere, rotated back and pooled, then projected.
    fn head(&self, shape: &EquirectShape, u: &[f64], v: &[f64], rotation: &Rotation3) -> Result<(Vec<f64>, Head)> {
        let w = shape.width();
        let motion: Vec<Vector3<f64>> = (0..shape.len())
            .map(|p| {
                let (c, r) = ((p % w) as f64, (p / w) as f64);
                shape.lift(c + u[p], r + v[p]).as_vector() - shape.lift(c, r).as_vector()
            })
            .collect();
        let taps = Self::taps(shape, rotation)?;
        let inv = rotation.inverse();
        let bins = Self::pool_bins(shape)?;
        let cells = POOL.0 * POOL.1;
        let mut counts = vec![0usize; cells];
        let mut features = vec![0.0; 3 * cells];
        for (p, tp) in taps.iter().enumerate() {
            let mut m = Vector3::zeros();
            for &(i, wt) in tp {
                m += motion[i] * wt;
            }
            let m = inv.rotate_vector(&m);
            let b = bins[p];
            counts[b] += 1;
            for ch in 0..3 {
                features[ch * cells + b] += m[ch];
            }
        }
        for ch in 0..3 {
            for b in 0..cells {
                features[ch * cells + b] /= counts[b] as f64;
            }
        }
        let nf = features.len();
        let latent = (0..self.latent_dim)
            .map(|k| self.projection[k * nf..(k + 1) * nf].iter().zip(&features).map(|(a, b)| a * b).sum())
            .collect();
        Ok((latent, Head { taps, bins, counts }))
    }
}

struct Head {
    taps: Vec<Taps>,
    bins: Vec<usize>,
    counts: Vec<usize>,
}

fn to_field(shape: &EquirectShape, u: &[f64], v: &[f64]) -> FlowField {
    FlowField::new(
        shape.width(),
        shape.height(),
        u.iter().map(|&x| x as f32).collect(),
        v.iter().map(|&x| x as f32).collect(),
    )
    .expect("buffers sized from shape")
}

impl SiameseEncoder for ToyEncoder {
    fn iterations(&self) -> usize {
        self.iterations
    }

    fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    fn encode(&self, first: &Image, second: &Image, rotation: &Rotation3) -> Result<EncoderOutput> {
        let d = drive(first, second)?;
        let it = self.iterate(&d);
        let (latent, _) = self.head(&d.shape, &it.u[self.iterations], &it.v[self.iterations], rotation)?;
        let flows = (1..=self.iterations).map(|i| to_field(&d.shape, &it.u[i], &it.v[i])).collect();
        Ok(EncoderOutput { flows, latent })
    }
}

/// Runs the toy encoder on an un-rotated frame pair.
pub fn toy_encoder(first: &Image, second: &Image) -> Result<EncoderOutput> {
    ToyEncoder::default().encode(first, second, &Rotation3::identity())
}

/// Predictor head mapping `z` to `p`.
#[derive(Debug, Clone, PartialEq)]
pub enum Predictor {
    Identity,
    /// `p = W2 tanh(W1 z + b1) + b2`, all `d x d`.
    Mlp { dim: usize, w1: Vec<f64>, b1: Vec<f64>, w2: Vec<f64>, b2: Vec<f64> },
}

fn matvec(m: &[f64], x: &[f64]) -> Vec<f64> {
    m.chunks_exact(x.len()).map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum()).collect()
}

fn matvec_t(m: &[f64], y: &[f64], cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; cols];
    for (row, &yk) in m.chunks_exact(cols).zip(y) {
        for (o, a) in out.iter_mut().zip(row) {
            *o += a * yk;
        }
    }
    out
}

impl Predictor {
    pub fn mlp(dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
        let s = 1.0 / (dim as f64).sqrt();
        let mut draw = |n: usize, scale: f64| -> Vec<f64> {
            (0..n).map(|_| scale * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng)).collect()
        };
        let w1 = draw(dim * dim, s);
        let b1 = draw(dim, 0.1);
        let w2 = draw(dim * dim, s);
        let b2 = draw(dim, 0.1);
        Predictor::Mlp { dim, w1, b1, w2, b2 }
    }

    pub fn forward(&self, z: &[f64]) -> Vec<f64> {
        match self {
            Predictor::Identity => z.to_vec(),
            Predictor::Mlp { w1, b1, w2, b2, .. } => {
                let hidden: Vec<f64> = matvec(w1, z).iter().zip(b1).map(|(a, b)| (a + b).tanh()).collect();
                matvec(w2, &hidden).iter().zip(b2).map(|(a, b)| a + b).collect()
            }
        }
    }

    /// Pulls a gradient on `p` back to `z`.
    fn backward(&self, z: &[f64], grad_p: &[f64]) -> Vec<f64> {
        match self {
            Predictor::Identity => grad_p.to_vec(),
            Predictor::Mlp { dim, w1, b1, w2, .. } => {
                let hidden: Vec<f64> = matvec(w1, z).iter().zip(b1).map(|(a, b)| (a + b).tanh()).collect();
                let gh = matvec_t(w2, grad_p, *dim);
                let gpre: Vec<f64> = gh.iter().zip(&hidden).map(|(g, h)| g * (1.0 - h * h)).collect();
                matvec_t(w1, &gpre, *dim)
            }
        }
    }
}

/// Loss terms of one pipeline evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineLoss {
    pub sim: f64,
    /// Mean of the two streams' sequence losses.
    pub flow: f64,
    pub total: f64,
    pub z_left: Vec<f64>,
    pub z_right: Vec<f64>,
    pub p_left: Vec<f64>,
    pub p_right: Vec<f64>,
}

/// The two-stream objective over [`ToyEncoder`].
#[derive(Debug, Clone, PartialEq)]
pub struct ToyPipeline {
    pub encoder: ToyEncoder,
    pub predictor: Predictor,
    pub gamma: f64,
}

impl Default for ToyPipeline {
    fn default() -> Self {
        let encoder = ToyEncoder::default();
        let predictor = Predictor::mlp(encoder.latent_dim, 1);
        Self { encoder, predictor, gamma: DEFAULT_GAMMA }
    }
}

struct StreamState {
    drive: Drive,
    iterates: Iterates,
    head: Head,
    target_u: Vec<f64>,
    target_v: Vec<f64>,
    rotation: Rotation3,
    z: Vec<f64>,
    p: Vec<f64>,
    flow_loss: f64,
}

impl ToyPipeline {
    fn stream(&self, first: &Image, second: &Image, gt: &FlowField, rotation: &Rotation3) -> Result<StreamState> {
        let map = build_warp_map(rotation, first.width(), first.height())?;
        let a = warp_image(first, &map, Interpolation::Bilinear)?;
        let b = warp_image(second, &map, Interpolation::Bilinear)?;
        let target = warp_flow(gt, &map, Interpolation::Bilinear)?;
        let drive = drive(&a, &b)?;
        let iterates = self.encoder.iterate(&drive);
        let n = self.encoder.iterations;
        let (z, head) = self.encoder.head(&drive.shape, &iterates.u[n], &iterates.v[n], rotation)?;
        let p = self.predictor.forward(&z);
        let target_u: Vec<f64> = target.u().iter().map(|&x| x as f64).collect();
        let target_v: Vec<f64> = target.v().iter().map(|&x| x as f64).collect();
        let weights = sequence_weights(n, self.gamma);
        let npx = (2 * target_u.len()) as f64;
        let flow_loss = (1..=n)
            .map(|i| {
                let l1: f64 = iterates.u[i]
                    .iter()
                    .zip(&target_u)
                    .chain(iterates.v[i].iter().zip(&target_v))
                    .map(|(a, b)| (a - b).abs())
                    .sum();
                weights[i - 1] * l1 / npx
            })
            .sum();
        Ok(StreamState { drive, iterates, head, target_u, target_v, rotation: *rotation, z, p, flow_loss })
    }

    fn forward(&self, first: &Image, second: &Image, gt: &FlowField, pair: &AugmentationPair) -> Result<(StreamState, StreamState)> {
        if gt.width() != first.width() || gt.height() != first.height() {
            return Err(Error::ShapeMismatch {
                left: format!("{}x{} flow", gt.height(), gt.width()),
                right: format!("{}x{} frames", first.height(), first.width()),
            });
        }
        let left = self.stream(first, second, gt, &pair.left.to_rotation()?)?;
        let right = self.stream(first, second, gt, &pair.right.to_rotation()?)?;
        Ok((left, right))
    }

    fn assemble(left: &StreamState, right: &StreamState) -> Result<(PipelineLoss, Vec<f64>, Vec<f64>)> {
        Self::assemble_against(left, right, &left.z, &right.z)
    }

    fn assemble_against(
        left: &StreamState,
        right: &StreamState,
        target_left: &[f64],
        target_right: &[f64],
    ) -> Result<(PipelineLoss, Vec<f64>, Vec<f64>)> {
        let (d1, g1) = cosine_distance_grad(&left.p, target_right)?;
        let (d2, g2) = cosine_distance_grad(&right.p, target_left)?;
        let sim = 0.5 * d1 + 0.5 * d2;
        let flow = 0.5 * (left.flow_loss + right.flow_loss);
        let loss = PipelineLoss {
            sim,
            flow,
            total: super::hybrid_loss(sim, flow),
            z_left: left.z.clone(),
            z_right: right.z.clone(),
            p_left: left.p.clone(),
            p_right: right.p.clone(),
        };
        let half = |g: Vec<f64>| g.into_iter().map(|x| 0.5 * x).collect::<Vec<_>>();
        Ok((loss, half(g1), half(g2)))
    }

    /// Evaluates the hybrid loss for frames `first`, `second` with ground
    /// truth `gt` under the given augmentation.
    pub fn loss(&self, first: &Image, second: &Image, gt: &FlowField, pair: &AugmentationPair) -> Result<PipelineLoss> {
        let (left, right) = self.forward(first, second, gt, pair)?;
        Ok(Self::assemble(&left, &right)?.0)
    }

    /// Like [`loss`](Self::loss) but with the similarity targets held at
    /// the given values instead of this evaluation's latents. Differencing
    /// this function reproduces [`loss_and_grad`](Self::loss_and_grad).
    pub fn loss_with_targets(
        &self,
        first: &Image,
        second: &Image,
        gt: &FlowField,
        pair: &AugmentationPair,
        z_left: &[f64],
        z_right: &[f64],
    ) -> Result<PipelineLoss> {
        let (left, right) = self.forward(first, second, gt, pair)?;
        Ok(Self::assemble_against(&left, &right, z_left, z_right)?.0)
    }

    /// Loss plus its gradient with respect to the encoder parameters. The
    /// targets `z` enter the similarity term as constants.
    pub fn loss_and_grad(
        &self,
        first: &Image,
        second: &Image,
        gt: &FlowField,
        pair: &AugmentationPair,
    ) -> Result<(PipelineLoss, Vec<f64>)> {
        let (left, right) = self.forward(first, second, gt, pair)?;
        let (loss, gp_left, gp_right) = Self::assemble(&left, &right)?;
        let mut grad = vec![0.0; self.encoder.params.len()];
        self.backward_stream(&left, &gp_left, &mut grad);
        self.backward_stream(&right, &gp_right, &mut grad);
        Ok((loss, grad))
    }

    fn backward_stream(&self, s: &StreamState, grad_p: &[f64], grad: &mut [f64]) {
        let enc = &self.encoder;
        let n = enc.iterations;
        let shape = &s.drive.shape;
        let w = shape.width();
        let npx = shape.len();
        let cells = POOL.0 * POOL.1;

        // latent -> pooled features -> rotated-back motion
        let gz = self.predictor.backward(&s.z, grad_p);
        let gfeat = matvec_t(&enc.projection, &gz, 3 * cells);
        let mut gmotion = vec![Vector3::<f64>::zeros(); npx];
        for (p, tp) in s.head.taps.iter().enumerate() {
            let b = s.head.bins[p];
            let c = s.head.counts[b] as f64;
            let g = Vector3::new(gfeat[b], gfeat[cells + b], gfeat[2 * cells + b]) / c;
            // m' = R^-1 m  =>  dm = R dm'
            let g = s.rotation.rotate_vector(&g);
            for &(i, wt) in tp {
                gmotion[i] += g * wt;
            }
        }

        // motion -> final flow
        let mut gu = vec![0.0; npx];
        let mut gv = vec![0.0; npx];
        let (un, vn) = (&s.iterates.u[n], &s.iterates.v[n]);
        for p in 0..npx {
            let (c, r) = ((p % w) as f64, (p / w) as f64);
            let (dc, dr) = shape.lift_jacobian(c + un[p], r + vn[p]);
            gu[p] = gmotion[p].dot(&dc);
            gv[p] = gmotion[p].dot(&dr);
        }

        // iterations, with the sequence loss entering at every step
        let weights = sequence_weights(n, self.gamma);
        let scale = 0.5 / (2 * npx) as f64;
        let sign = |x: f64| if x > 0.0 { 1.0 } else if x < 0.0 { -1.0 } else { 0.0 };
        for i in (1..=n).rev() {
            let wl = weights[i - 1] * scale;
            for p in 0..npx {
                gu[p] += wl * sign(s.iterates.u[i][p] - s.target_u[p]);
                gv[p] += wl * sign(s.iterates.v[i][p] - s.target_v[p]);
            }
            let b = enc.params[n + i - 1];
            let (mut ga, mut gb) = (0.0, 0.0);
            for p in 0..npx {
                let tu = s.iterates.tu[i - 1][p];
                let tv = s.iterates.tv[i - 1][p];
                let su = gu[p] * (1.0 - tu * tu);
                let sv = gv[p] * (1.0 - tv * tv);
                ga += su * s.drive.x[p] + sv * s.drive.y[p];
                gb -= su * s.iterates.u[i - 1][p] + sv * s.iterates.v[i - 1][p];
                gu[p] -= su * b;
                gv[p] -= sv * b;
            }
            grad[i - 1] += ga;
            grad[n + i - 1] += gb;
        }
    }
}
