//! Reference implementation of the siamese training objective: rotation-pair
//! sampling, negative-cosine similarity with stop-gradient targets, the
//! iteration-weighted flow sequence loss, and a collapse monitor.
//!
//! Gradients are exposed only for these operations (see [`toy`] for a full
//! differentiable pipeline); there is no general autodiff engine.

pub mod toy;

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{FlowField, Interpolation};
use crate::sphere::EulerAngles;
use crate::warp::{warp_flow, WarpMap};

/// Decay of the flow sequence weights.
pub const DEFAULT_GAMMA: f64 = 0.8;

/// Rotations on the augmented side have at least one angle of this magnitude.
pub const MIN_ROTATION: f64 = 0.05;

/// Rotational augmentation schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    /// Left stream never rotated, right stream always rotated.
    V1,
    /// One side rotated per sample, chosen uniformly at random.
    V2,
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "v1" => Ok(Strategy::V1),
            "v2" => Ok(Strategy::V2),
            other => Err(Error::UnknownStrategy(other.to_string())),
        }
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Strategy::V1 => "v1",
            Strategy::V2 => "v2",
        })
    }
}

/// Rotations applied to the two streams; exactly one is the identity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentationPair {
    pub strategy: Strategy,
    pub left: EulerAngles,
    pub right: EulerAngles,
}

impl AugmentationPair {
    pub fn left_is_identity(&self) -> bool {
        self.left.is_zero()
    }
}

fn random_angles(rng: &mut ChaCha8Rng) -> EulerAngles {
    loop {
        let a = EulerAngles::new(rng.random_range(-PI..PI), rng.random_range(-PI..PI), rng.random_range(-PI..PI));
        if a.pitch.abs().max(a.roll.abs()).max(a.yaw.abs()) >= MIN_ROTATION {
            return a;
        }
    }
}

/// Seeded sampler. Sample `i` draws from its own ChaCha stream, so samples
/// can be generated independently and in any order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AugmentationSampler {
    strategy: Strategy,
    seed: u64,
}

impl AugmentationSampler {
    pub fn new(strategy: Strategy, seed: u64) -> Self {
        Self { strategy, seed }
    }

    pub fn sample(&self, index: u64) -> AugmentationPair {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index);
        let rotate_left = match self.strategy {
            Strategy::V1 => false,
            Strategy::V2 => rng.random::<bool>(),
        };
        let angles = random_angles(&mut rng);
        let (left, right) = if rotate_left { (angles, EulerAngles::ZERO) } else { (EulerAngles::ZERO, angles) };
        AugmentationPair { strategy: self.strategy, left, right }
    }

    pub fn take(&self, n: usize) -> Vec<AugmentationPair> {
        (0..n as u64).map(|i| self.sample(i)).collect()
    }
}

/// First sample of the sampler seeded with `seed`.
pub fn sample_augmentation(strategy: Strategy, seed: u64) -> AugmentationPair {
    AugmentationSampler::new(strategy, seed).sample(0)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_pair(p: &[f64], z: &[f64]) -> Result<()> {
    if p.len() != z.len() {
        return Err(Error::ShapeMismatch { left: format!("latent of {}", p.len()), right: format!("latent of {}", z.len()) });
    }
    Ok(())
}

/// Negative cosine similarity `-(p/|p|) . (z/|z|)`, in `[-1, 1]`.
pub fn cosine_distance(p: &[f64], z: &[f64]) -> Result<f64> {
    check_pair(p, z)?;
    let (pp, zz) = (dot(p, p), dot(z, z));
    if pp == 0.0 || zz == 0.0 {
        return Err(Error::ZeroNorm);
    }
    Ok((-dot(p, z) / (pp * zz).sqrt()).clamp(-1.0, 1.0))
}

/// Value and gradient with respect to `p` of [`cosine_distance`]; `z` is a constant.
pub fn cosine_distance_grad(p: &[f64], z: &[f64]) -> Result<(f64, Vec<f64>)> {
    let value = cosine_distance(p, z)?;
    let np = dot(p, p).sqrt();
    let nz = dot(z, z).sqrt();
    let pz = dot(p, z);
    let grad = p
        .iter()
        .zip(z)
        .map(|(pi, zi)| -(zi / (np * nz) - pz * pi / (np * np * np * nz)))
        .collect();
    Ok((value, grad))
}

/// A value treated as a constant by the gradient routines.
#[derive(Debug, Clone, Copy)]
pub struct StopGrad<'a>(pub &'a [f64]);

/// Symmetrized similarity loss and its gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityLoss {
    pub value: f64,
    pub grad_p_left: Vec<f64>,
    pub grad_p_right: Vec<f64>,
    /// Always zero: the targets are stop-gradient constants.
    pub grad_z_left: Vec<f64>,
    pub grad_z_right: Vec<f64>,
}

/// `0.5 * D(p_left, z_right) + 0.5 * D(p_right, z_left)`.
pub fn symmetrized_similarity_loss(
    p_left: &[f64],
    z_right: StopGrad<'_>,
    p_right: &[f64],
    z_left: StopGrad<'_>,
) -> Result<SimilarityLoss> {
    let (d1, g1) = cosine_distance_grad(p_left, z_right.0)?;
    let (d2, g2) = cosine_distance_grad(p_right, z_left.0)?;
    Ok(SimilarityLoss {
        value: 0.5 * d1 + 0.5 * d2,
        grad_p_left: g1.into_iter().map(|g| 0.5 * g).collect(),
        grad_p_right: g2.into_iter().map(|g| 0.5 * g).collect(),
        grad_z_left: vec![0.0; z_left.0.len()],
        grad_z_right: vec![0.0; z_right.0.len()],
    })
}

/// Weights `gamma^(n-i)` for `i = 1..=n`; the last prediction has weight 1.
pub fn sequence_weights(n: usize, gamma: f64) -> Vec<f64> {
    (1..=n).map(|i| gamma.powi((n - i) as i32)).collect()
}

/// Per-prediction L1 terms and the weighted total.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceLoss {
    pub value: f64,
    pub weights: Vec<f64>,
    /// Mean absolute error over pixels and both channels, per prediction.
    pub l1: Vec<f64>,
}

fn l1_mean(pred: &FlowField, target: &FlowField) -> f64 {
    let sum: f64 = pred
        .u()
        .iter()
        .zip(target.u())
        .chain(pred.v().iter().zip(target.v()))
        .map(|(a, b)| (*a as f64 - *b as f64).abs())
        .sum();
    sum / (2 * pred.len()) as f64
}

/// Weighted L1 sequence loss against an already-aligned target.
pub fn sequence_loss_against(predictions: &[FlowField], target: &FlowField, gamma: f64) -> Result<SequenceLoss> {
    if predictions.is_empty() {
        return Err(Error::EmptyInput("empty prediction sequence".into()));
    }
    for p in predictions {
        p.same_shape(target)?;
    }
    let weights = sequence_weights(predictions.len(), gamma);
    let l1: Vec<f64> = predictions.iter().map(|p| l1_mean(p, target)).collect();
    let value = weights.iter().zip(&l1).map(|(w, l)| w * l).sum();
    Ok(SequenceLoss { value, weights, l1 })
}

/// Sequence loss against the ground truth rotated into the predictions' frame.
pub fn sequence_flow_loss(
    predictions: &[FlowField],
    gt: &FlowField,
    rotation: &WarpMap,
    gamma: f64,
) -> Result<SequenceLoss> {
    let target = warp_flow(gt, rotation, Interpolation::Bilinear)?;
    sequence_loss_against(predictions, &target, gamma)
}

/// Gradient of [`sequence_loss_against`] with respect to each prediction, as
/// `(d/du, d/dv)` per prediction. Uses 0 as the subgradient of `|x|` at 0.
pub fn sequence_loss_grad(predictions: &[FlowField], target: &FlowField, gamma: f64) -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
    let loss = sequence_loss_against(predictions, target, gamma)?;
    let scale = 1.0 / (2 * target.len()) as f64;
    let sign = |a: f32, b: f32| {
        let d = a as f64 - b as f64;
        if d > 0.0 {
            1.0
        } else if d < 0.0 {
            -1.0
        } else {
            0.0
        }
    };
    Ok(predictions
        .iter()
        .zip(&loss.weights)
        .map(|(p, w)| {
            let gu = p.u().iter().zip(target.u()).map(|(a, b)| w * scale * sign(*a, *b)).collect();
            let gv = p.v().iter().zip(target.v()).map(|(a, b)| w * scale * sign(*a, *b)).collect();
            (gu, gv)
        })
        .collect())
}

/// `L = L_sim + L_flow`.
pub fn hybrid_loss(sim: f64, flow: f64) -> f64 {
    sim + flow
}

/// Spread of l2-normalized latents across a batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollapseReport {
    /// Standard deviation of each channel over the batch (n - 1 denominator).
    pub per_channel_std: Vec<f64>,
    pub mean_std: f64,
    /// `1/sqrt(d)`, the spread of isotropic unit vectors.
    pub reference: f64,
    pub collapsed: bool,
}

/// Mean per-channel std below this marks a collapsed representation.
pub const COLLAPSE_THRESHOLD: f64 = 1e-6;

pub fn collapse_monitor(latents: &[Vec<f64>]) -> Result<CollapseReport> {
    if latents.len() < 2 {
        return Err(Error::InvalidArgument(format!("batch of {} is too small (need >= 2)", latents.len())));
    }
    let d = latents[0].len();
    if d < 2 {
        return Err(Error::InvalidArgument("latent dimension must be >= 2".into()));
    }
    let mut normalized = Vec::with_capacity(latents.len());
    for z in latents {
        if z.len() != d {
            return Err(Error::ShapeMismatch { left: format!("latent of {}", z.len()), right: format!("latent of {d}") });
        }
        let n = dot(z, z).sqrt();
        if n == 0.0 || !n.is_finite() {
            return Err(Error::ZeroNorm);
        }
        normalized.push(z.iter().map(|x| x / n).collect::<Vec<_>>());
    }
    let b = latents.len() as f64;
    let per_channel_std: Vec<f64> = (0..d)
        .map(|c| {
            // shifted by the first sample so a constant channel gives exactly 0
            let shift = normalized[0][c];
            let mean = normalized.iter().map(|z| z[c] - shift).sum::<f64>() / b;
            let var = normalized.iter().map(|z| (z[c] - shift - mean).powi(2)).sum::<f64>() / (b - 1.0);
            var.sqrt()
        })
        .collect();
    let mean_std = per_channel_std.iter().sum::<f64>() / d as f64;
    Ok(CollapseReport { per_channel_std, mean_std, reference: 1.0 / (d as f64).sqrt(), collapsed: mean_std < COLLAPSE_THRESHOLD })
}
