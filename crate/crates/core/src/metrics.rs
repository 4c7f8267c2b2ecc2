//! Positional and variance errors against ground truth, and the distance
//! across the boundary between two consecutive actions.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::compose::{align_second, compose, ComposeError, CompositionRequest, StitchConfig, Strategy};
use crate::dataset::ActionPair;
use crate::model::{Model, ModelError, Prompt, Sampling};
use crate::motion::{canonicalize, Motion, MotionError};
use crate::rng::derive_seed;
use crate::rotation::yaw_matrix;

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("frame counts differ: {0} vs {1}")]
    Length(usize, usize),
    #[error("variance needs at least 2 frames, got {0}")]
    TooShort(usize),
    #[error("nothing to evaluate")]
    Empty,
    #[error(transparent)]
    Motion(#[from] MotionError),
    #[error(transparent)]
    Compose(#[from] ComposeError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Root position, xyz.
    RootJoint,
    /// Root position projected on the ground plane.
    GlobalTraj,
    /// Non-root joints relative to the root, root yaw removed.
    MeanLocal,
    /// Non-root joints in world coordinates.
    MeanGlobal,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::RootJoint, Variant::GlobalTraj, Variant::MeanLocal, Variant::MeanGlobal];
}

/// Per-frame point sets a variant compares: one list of points per frame.
pub type PointFrames = Vec<Vec<Vector3<f64>>>;

/// Points of one variant from joint positions and root headings.
pub fn variant_points(positions: &[Vec<Vector3<f64>>], headings: &[f64], variant: Variant) -> PointFrames {
    positions
        .iter()
        .zip(headings)
        .map(|(joints, &h)| match variant {
            Variant::RootJoint => vec![joints[0]],
            Variant::GlobalTraj => vec![Vector3::new(joints[0].x, joints[0].y, 0.0)],
            Variant::MeanGlobal => joints[1..].to_vec(),
            Variant::MeanLocal => {
                let r = yaw_matrix(-h);
                joints[1..].iter().map(|p| r * (p - joints[0])).collect()
            }
        })
        .collect()
}

fn points(m: &Motion, variant: Variant) -> Result<PointFrames, MetricError> {
    let pos = m.joint_positions()?;
    let headings = m.frames().iter().map(|p| p.heading()).collect::<Result<Vec<_>, _>>().map_err(MotionError::from)?;
    Ok(variant_points(&pos, &headings, variant))
}

/// Mean over frames and points of the Euclidean distance.
pub fn ape_points(gt: &PointFrames, gen: &PointFrames) -> Result<f64, MetricError> {
    if gt.len() != gen.len() {
        return Err(MetricError::Length(gt.len(), gen.len()));
    }
    if gt.is_empty() {
        return Err(MetricError::Empty);
    }
    let mut total = 0.0;
    let mut n = 0usize;
    for (a, b) in gt.iter().zip(gen) {
        for (p, q) in a.iter().zip(b) {
            total += (p - q).norm();
            n += 1;
        }
    }
    Ok(total / n as f64)
}

/// Mean over points of the norm of the difference in per-coordinate
/// population variance over time.
pub fn ave_points(gt: &PointFrames, gen: &PointFrames) -> Result<f64, MetricError> {
    if gt.len() != gen.len() {
        return Err(MetricError::Length(gt.len(), gen.len()));
    }
    if gt.len() < 2 {
        return Err(MetricError::TooShort(gt.len()));
    }
    let var = |frames: &PointFrames, j: usize| {
        let n = frames.len() as f64;
        let mean: Vector3<f64> = frames.iter().map(|f| f[j]).sum::<Vector3<f64>>() / n;
        frames.iter().map(|f| (f[j] - mean).component_mul(&(f[j] - mean))).sum::<Vector3<f64>>() / n
    };
    let joints = gt[0].len();
    let total: f64 = (0..joints).map(|j| (var(gt, j) - var(gen, j)).norm()).sum();
    Ok(total / joints as f64)
}

pub fn ape(gt: &Motion, gen: &Motion, variant: Variant) -> Result<f64, MetricError> {
    if gt.len() != gen.len() {
        return Err(MetricError::Length(gt.len(), gen.len()));
    }
    gt.check_compatible(gen)?;
    ape_points(&points(gt, variant)?, &points(gen, variant)?)
}

pub fn ave(gt: &Motion, gen: &Motion, variant: Variant) -> Result<f64, MetricError> {
    if gt.len() != gen.len() {
        return Err(MetricError::Length(gt.len(), gen.len()));
    }
    gt.check_compatible(gen)?;
    ave_points(&points(gt, variant)?, &points(gen, variant)?)
}

/// Mean joint distance between the last frame of `first` and the first
/// frame of `second`, optionally after aligning `second` to `first`.
pub fn transition_distance(first: &Motion, second: &Motion, align: bool) -> Result<f64, MetricError> {
    first.check_compatible(second)?;
    let second = if align { align_second(first, second)? } else { second.clone() };
    let a = first.slice(first.len() - 1, first.len())?.joint_positions()?;
    let b = second.slice(0, 1)?.joint_positions()?;
    Ok(a[0].iter().zip(&b[0]).map(|(p, q)| (p - q).norm()).sum::<f64>() / a[0].len() as f64)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct VariantScores {
    pub root_joint: f64,
    pub global_traj: f64,
    pub mean_local: f64,
    pub mean_global: f64,
}

impl VariantScores {
    pub fn get(&self, v: Variant) -> f64 {
        match v {
            Variant::RootJoint => self.root_joint,
            Variant::GlobalTraj => self.global_traj,
            Variant::MeanLocal => self.mean_local,
            Variant::MeanGlobal => self.mean_global,
        }
    }

    fn get_mut(&mut self, v: Variant) -> &mut f64 {
        match v {
            Variant::RootJoint => &mut self.root_joint,
            Variant::GlobalTraj => &mut self.global_traj,
            Variant::MeanLocal => &mut self.mean_local,
            Variant::MeanGlobal => &mut self.mean_global,
        }
    }

    pub fn values(&self) -> [f64; 4] {
        Variant::ALL.map(|v| self.get(v))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TransitionScores {
    pub with_align: f64,
    pub without_align: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub ape: VariantScores,
    pub ave: VariantScores,
    pub transition_dist: TransitionScores,
    pub samples: usize,
    pub seed: u64,
}

impl MetricReport {
    pub const CSV_HEADER: &'static str = "ape_root_joint,ape_global_traj,ape_mean_local,ape_mean_global,\
ave_root_joint,ave_global_traj,ave_mean_local,ave_mean_global,transition_with_align,transition_without_align";

    pub fn csv_row(&self) -> String {
        let mut v: Vec<f64> = self.ape.values().to_vec();
        v.extend(self.ave.values());
        v.push(self.transition_dist.with_align);
        v.push(self.transition_dist.without_align);
        v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
    }
}

/// What one evaluated pair contributes: the full generated motion (same
/// length as the ground truth) and the two generated actions before
/// stitching.
#[derive(Debug, Clone, PartialEq)]
pub struct PairOutput {
    pub motion: Motion,
    pub first: Motion,
    pub second: Motion,
}

/// Metrics of one pair against its ground truth.
pub fn score_pair(gt: &Motion, out: &PairOutput) -> Result<MetricReport, MetricError> {
    let mut report = MetricReport {
        ape: VariantScores::default(),
        ave: VariantScores::default(),
        transition_dist: TransitionScores {
            with_align: transition_distance(&out.first, &out.second, true)?,
            without_align: transition_distance(&out.first, &out.second, false)?,
        },
        samples: 1,
        seed: 0,
    };
    for v in Variant::ALL {
        *report.ape.get_mut(v) = ape(gt, &out.motion, v)?;
        *report.ave.get_mut(v) = ave(gt, &out.motion, v)?;
    }
    Ok(report)
}

/// Average of per-pair metrics. Pair `i` is generated with
/// `Sampling::Stochastic(derive_seed(seed, [i]))`; the reduction runs in
/// pair order.
pub fn evaluate_with<F>(pairs: &[ActionPair], seed: u64, mut generate: F) -> Result<MetricReport, MetricError>
where
    F: FnMut(&ActionPair, Sampling) -> Result<PairOutput, MetricError>,
{
    evaluate_sampled(pairs, seed, |p, i| generate(p, Sampling::Stochastic(derive_seed(seed, &[i]))))
}

/// Like [`evaluate_with`] with a caller-chosen sampling mode for every pair.
pub fn evaluate_mode<F>(pairs: &[ActionPair], mode: Sampling, seed: u64, mut generate: F) -> Result<MetricReport, MetricError>
where
    F: FnMut(&ActionPair, Sampling) -> Result<PairOutput, MetricError>,
{
    evaluate_sampled(pairs, seed, |p, i| generate(p, mode.child(i)))
}

fn evaluate_sampled<F>(pairs: &[ActionPair], seed: u64, mut run: F) -> Result<MetricReport, MetricError>
where
    F: FnMut(&ActionPair, u64) -> Result<PairOutput, MetricError>,
{
    if pairs.is_empty() {
        return Err(MetricError::Empty);
    }
    let mut sum = MetricReport {
        ape: VariantScores::default(),
        ave: VariantScores::default(),
        transition_dist: TransitionScores::default(),
        samples: 0,
        seed,
    };
    for (i, pair) in pairs.iter().enumerate() {
        let gt = canonicalize(&pair.concatenated()?)?;
        let out = run(pair, i as u64)?;
        let r = score_pair(&gt, &out)?;
        for v in Variant::ALL {
            *sum.ape.get_mut(v) += r.ape.get(v);
            *sum.ave.get_mut(v) += r.ave.get(v);
        }
        sum.transition_dist.with_align += r.transition_dist.with_align;
        sum.transition_dist.without_align += r.transition_dist.without_align;
    }
    let n = pairs.len() as f64;
    for v in Variant::ALL {
        *sum.ape.get_mut(v) /= n;
        *sum.ave.get_mut(v) /= n;
    }
    sum.transition_dist.with_align /= n;
    sum.transition_dist.without_align /= n;
    sum.samples = pairs.len();
    Ok(sum)
}

/// Compose the pair's two descriptions with the model's strategy at the
/// ground-truth durations.
pub fn generate_pair(
    model: &Model,
    strategy: Strategy,
    stitch: StitchConfig,
    pair: &ActionPair,
    sampling: Sampling,
) -> Result<PairOutput, MetricError> {
    let fps = model.fps;
    let prompts = vec![
        Prompt::new(pair.text_1.clone(), pair.motion_1.len() as f64 / fps),
        Prompt::new(pair.text_2.clone(), pair.motion_2.len() as f64 / fps),
    ];
    let c = compose(&CompositionRequest { prompts, strategy, stitch, sampling }, model)?;
    let mut actions = c.actions.into_iter();
    let first = actions.next().expect("two actions");
    let second = actions.next().expect("two actions");
    Ok(PairOutput { motion: c.motion, first, second })
}

/// One stochastic sample per validation pair, compared to ground truth.
pub fn evaluate(
    model: &Model,
    strategy: Strategy,
    stitch: StitchConfig,
    pairs: &[ActionPair],
    seed: u64,
) -> Result<MetricReport, MetricError> {
    evaluate_with(pairs, seed, |p, s| generate_pair(model, strategy, stitch, p, s))
}
