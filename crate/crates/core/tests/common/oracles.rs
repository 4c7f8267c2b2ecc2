//! Reference implementations written independently of the library, used to
//! cross-check it.

use std::sync::Arc;

use motion_compose::dataset::{LabeledSegment, PairSource};
use motion_compose::motion::{Motion, Pose};
use motion_compose::rotation::{matrix_to_rot6d, Quat, Rot6d};
use motion_compose::skeleton::Skeleton;
use nalgebra::{Matrix3, Quaternion, UnitQuaternion, Vector3};
use rand::Rng;
use rand_distr::StandardNormal;

pub fn gauss(rng: &mut impl Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Uniformly distributed rotation (normalized 4D Gaussian).
pub fn random_unit_quat(rng: &mut impl Rng) -> UnitQuaternion<f64> {
    loop {
        let q = Quaternion::new(gauss(rng), gauss(rng), gauss(rng), gauss(rng));
        if q.norm() > 1e-6 {
            return UnitQuaternion::from_quaternion(q);
        }
    }
}

pub fn to_quat(q: &UnitQuaternion<f64>) -> Quat {
    Quat::new(q.w, q.i, q.j, q.k)
}

pub fn from_quat(q: &Quat) -> UnitQuaternion<f64> {
    UnitQuaternion::from_quaternion(Quaternion::new(q.w, q.x, q.y, q.z))
}

pub fn random_matrix(rng: &mut impl Rng) -> Matrix3<f64> {
    random_unit_quat(rng).to_rotation_matrix().into_inner()
}

/// Gram-Schmidt on the two stacked columns, third column by cross product.
pub fn gram_schmidt(r: &Rot6d) -> Matrix3<f64> {
    let a1 = Vector3::new(r[0], r[1], r[2]);
    let a2 = Vector3::new(r[3], r[4], r[5]);
    let b1 = a1 / a1.norm();
    let p = a2 - b1 * b1.dot(&a2);
    let b2 = p / p.norm();
    let b3 = b1.cross(&b2);
    Matrix3::from_columns(&[b1, b2, b3])
}

/// Quaternion distance that ignores the double cover.
pub fn quat_dist(a: &Quat, b: &Quat) -> f64 {
    let d = |s: f64| {
        ((a.w - s * b.w).powi(2) + (a.x - s * b.x).powi(2) + (a.y - s * b.y).powi(2) + (a.z - s * b.z).powi(2)).sqrt()
    };
    d(1.0).min(d(-1.0))
}

/// Rotation a fraction `t` of the way along the shortest arc from `q0` to
/// `q1`, via the axis-angle of the relative rotation.
pub fn fractional_rotation(q0: &UnitQuaternion<f64>, q1: &UnitQuaternion<f64>, t: f64) -> UnitQuaternion<f64> {
    let mut rel = q0.inverse() * q1;
    if rel.w < 0.0 {
        rel = UnitQuaternion::new_unchecked(-rel.into_inner());
    }
    match rel.axis_angle() {
        Some((axis, angle)) => q0 * UnitQuaternion::from_axis_angle(&axis, t * angle),
        None => *q0,
    }
}

pub fn random_pose(rng: &mut impl Rng, joints: usize, spread: f64) -> Pose {
    Pose {
        root_translation: [spread * gauss(rng), spread * gauss(rng), 0.9 + 0.1 * gauss(rng)],
        rot6d: (0..joints).map(|_| matrix_to_rot6d(&random_matrix(rng))).collect(),
    }
}

pub fn random_motion(rng: &mut impl Rng, frames: usize) -> Motion {
    let skeleton = Arc::new(Skeleton::humanoid());
    let j = skeleton.num_joints();
    let poses = (0..frames).map(|_| random_pose(rng, j, 1.0)).collect();
    Motion::new(poses, 30.0, skeleton).unwrap()
}

/// Smoothly varying motion: each joint rotates about a fixed random axis at
/// a random rate and the root drifts linearly.
pub fn smooth_motion(rng: &mut impl Rng, frames: usize) -> Motion {
    let skeleton = Arc::new(Skeleton::humanoid());
    let j = skeleton.num_joints();
    let starts: Vec<UnitQuaternion<f64>> = (0..j).map(|_| random_unit_quat(rng)).collect();
    let axes: Vec<nalgebra::Unit<Vector3<f64>>> = (0..j)
        .map(|_| nalgebra::Unit::new_normalize(Vector3::new(gauss(rng), gauss(rng), gauss(rng))))
        .collect();
    let rates: Vec<f64> = (0..j).map(|_| 0.05 * gauss(rng)).collect();
    let root0 = [gauss(rng), gauss(rng), 0.9];
    let vel = [0.02 * gauss(rng), 0.02 * gauss(rng), 0.0];
    let poses = (0..frames)
        .map(|f| {
            let t = f as f64;
            Pose {
                root_translation: [root0[0] + vel[0] * t, root0[1] + vel[1] * t, root0[2]],
                rot6d: (0..j)
                    .map(|k| {
                        let q = starts[k] * UnitQuaternion::from_axis_angle(&axes[k], rates[k] * t);
                        matrix_to_rot6d(&q.to_rotation_matrix().into_inner())
                    })
                    .collect(),
            }
        })
        .collect();
    Motion::new(poses, 30.0, skeleton).unwrap()
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct OraclePair {
    pub first: usize,
    pub second: usize,
    pub span_1: (usize, usize),
    pub span_2: (usize, usize),
    pub source: PairSource,
}

fn usable(s: &LabeledSegment) -> bool {
    let t = s.text.trim().to_lowercase();
    let squashed: String = t.chars().filter(|c| c.is_alphanumeric()).collect();
    t != "transition" && squashed != "tpose" && squashed != "apose"
}

fn intersects(a: &LabeledSegment, b: &LabeledSegment) -> bool {
    a.start_frame.max(b.start_frame) < a.end_frame.min(b.end_frame)
}

fn subset(a: &LabeledSegment, b: &LabeledSegment) -> bool {
    (a.start_frame..a.end_frame).all(|f| (b.start_frame..b.end_frame).contains(&f))
}

/// Brute force over all ordered segment pairs and all transitions.
///
/// Overlap rule: two usable segments intersect and neither is a subset of
/// the other; the earlier-starting one comes first and the shared frames are
/// split in half, the odd frame going to the first. Bridge rule: for each
/// transition, the overlapping usable segment with the latest start before
/// it and the one with the earliest start at or after it (ties: end, then
/// index) form a pair when the second ends after the first; the second
/// member takes every frame after the first member.
pub fn oracle_pairs(segments: &[LabeledSegment]) -> Vec<OraclePair> {
    let n = segments.len();
    let mut bridges = Vec::new();
    for t in segments.iter().filter(|s| s.text.trim().to_lowercase() == "transition") {
        let touching: Vec<usize> = (0..n).filter(|&i| usable(&segments[i]) && intersects(&segments[i], t)).collect();
        let before = touching
            .iter()
            .copied()
            .filter(|&i| segments[i].start_frame < t.start_frame)
            .max_by_key(|&i| (segments[i].start_frame, segments[i].end_frame, std::cmp::Reverse(i)));
        let after = touching
            .iter()
            .copied()
            .filter(|&i| segments[i].start_frame >= t.start_frame)
            .min_by_key(|&i| (segments[i].start_frame, segments[i].end_frame, i));
        if let (Some(a), Some(b)) = (before, after) {
            let (sa, sb) = (&segments[a], &segments[b]);
            if sb.end_frame > sa.end_frame {
                let p = OraclePair {
                    first: a,
                    second: b,
                    span_1: (sa.start_frame, sa.end_frame),
                    span_2: (sa.end_frame, sb.end_frame),
                    source: PairSource::TransitionBridge,
                };
                if !bridges.contains(&p) {
                    bridges.push(p);
                }
            }
        }
    }
    let mut out = bridges.clone();
    for i in 0..n {
        for j in 0..n {
            let (a, b) = (&segments[i], &segments[j]);
            if i == j || !usable(a) || !usable(b) || !intersects(a, b) || subset(a, b) || subset(b, a) {
                continue;
            }
            if a.start_frame >= b.start_frame {
                continue;
            }
            if bridges.iter().any(|p| p.first == i && p.second == j) {
                continue;
            }
            let shared = a.end_frame - b.start_frame;
            let mid = b.start_frame + shared / 2 + shared % 2;
            out.push(OraclePair {
                first: i,
                second: j,
                span_1: (a.start_frame, mid),
                span_2: (mid, b.end_frame),
                source: PairSource::Overlap,
            });
        }
    }
    out.sort();
    out
}

/// Random label layout over `frames` frames with nested, chained, identical
/// and transition-bridged segments; every frame is covered.
pub fn random_layout(rng: &mut impl Rng, frames: usize) -> Vec<LabeledSegment> {
    let texts = ["walk forward", "wave", "sit down", "jump", "t-pose", "A pose"];
    let mut segs = Vec::new();
    let count = rng.random_range(1..9);
    for _ in 0..count {
        let start = rng.random_range(0..frames - 1);
        let len = rng.random_range(1..=(frames - start).min(40));
        let roll: f64 = rng.random();
        let text = if roll < 0.3 {
            "transition"
        } else if roll < 0.35 {
            texts[rng.random_range(4..6)]
        } else {
            texts[rng.random_range(0..4)]
        };
        segs.push(LabeledSegment::new(text, start, start + len).unwrap());
        // Occasionally duplicate an interval or nest a segment inside.
        if rng.random::<f64>() < 0.1 {
            segs.push(LabeledSegment::new("jump", start, start + len).unwrap());
        }
        if len > 3 && rng.random::<f64>() < 0.1 {
            segs.push(LabeledSegment::new("wave", start + 1, start + len - 1).unwrap());
        }
    }
    let mut covered = vec![false; frames];
    for s in &segs {
        for c in &mut covered[s.start_frame..s.end_frame] {
            *c = true;
        }
    }
    let mut f = 0;
    while f < frames {
        if covered[f] {
            f += 1;
            continue;
        }
        let start = f;
        while f < frames && !covered[f] {
            f += 1;
        }
        segs.push(LabeledSegment::new("walk forward", start, f).unwrap());
    }
    segs
}
