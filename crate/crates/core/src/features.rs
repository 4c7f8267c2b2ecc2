//! Flat per-frame feature vectors and standardization.
//!
//! Layout: `[rot6d joint 0, ..., rot6d joint J-1, root_x, root_y, root_z]`,
//! so `D = 6 * J + 3`. Root translation is absolute in the motion's frame.

use std::sync::Arc;

use ndarray::{Array1, Array2, ArrayView1};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::motion::{Motion, MotionError, Pose};
use crate::skeleton::Skeleton;

/// Floor applied to every standard deviation.
pub const STD_FLOOR: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FeatureError {
    #[error("feature dimension mismatch: expected {expected}, got {got}")]
    Dim { expected: usize, got: usize },
    #[error("no frames to compute statistics from")]
    NoData,
}

pub fn feature_dim(num_joints: usize) -> usize {
    6 * num_joints + 3
}

pub fn pose_features(pose: &Pose) -> Vec<f64> {
    let mut out = Vec::with_capacity(feature_dim(pose.num_joints()));
    for r in &pose.rot6d {
        out.extend_from_slice(r);
    }
    out.extend_from_slice(&pose.root_translation);
    out
}

pub fn features_to_pose(features: &[f64], skeleton: &Skeleton) -> Result<Pose, FeatureError> {
    let j = skeleton.num_joints();
    let d = feature_dim(j);
    if features.len() != d {
        return Err(FeatureError::Dim { expected: d, got: features.len() });
    }
    let rot6d = features[..6 * j]
        .chunks_exact(6)
        .map(|c| [c[0], c[1], c[2], c[3], c[4], c[5]])
        .collect();
    let root_translation = [features[6 * j], features[6 * j + 1], features[6 * j + 2]];
    Ok(Pose { root_translation, rot6d })
}

/// Frames x D feature matrix of a motion.
pub fn motion_features(motion: &Motion) -> Array2<f64> {
    let d = feature_dim(motion.skeleton().num_joints());
    let mut out = Array2::zeros((motion.len(), d));
    for (mut row, pose) in out.rows_mut().into_iter().zip(motion.frames()) {
        row.assign(&ArrayView1::from(&pose_features(pose)));
    }
    out
}

pub fn features_to_motion(
    features: &Array2<f64>,
    fps: f64,
    skeleton: Arc<Skeleton>,
) -> Result<Motion, MotionError> {
    let frames = features
        .rows()
        .into_iter()
        .map(|row| {
            let v: Vec<f64> = row.to_vec();
            features_to_pose(&v, &skeleton).map_err(|_| MotionError::JointCount {
                frame: 0,
                got: v.len(),
                expected: feature_dim(skeleton.num_joints()),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Motion::new(frames, fps, skeleton)
}

/// Per-coordinate mean and (floored, population) standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl FeatureStats {
    pub fn identity(dim: usize) -> Self {
        FeatureStats { mean: vec![0.0; dim], std: vec![1.0; dim] }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Statistics over every row of every matrix.
    pub fn from_features<'a, I>(mats: I) -> Result<Self, FeatureError>
    where
        I: IntoIterator<Item = &'a Array2<f64>>,
    {
        let mut sum: Option<Array1<f64>> = None;
        let mut sum_sq: Option<Array1<f64>> = None;
        let mut n = 0usize;
        for m in mats {
            let d = m.ncols();
            let s = sum.get_or_insert_with(|| Array1::zeros(d));
            if s.len() != d {
                return Err(FeatureError::Dim { expected: s.len(), got: d });
            }
            *s += &m.sum_axis(ndarray::Axis(0));
            let sq = sum_sq.get_or_insert_with(|| Array1::zeros(d));
            *sq += &m.mapv(|x| x * x).sum_axis(ndarray::Axis(0));
            n += m.nrows();
        }
        let (sum, sum_sq) = match (sum, sum_sq) {
            (Some(a), Some(b)) if n > 0 => (a, b),
            _ => return Err(FeatureError::NoData),
        };
        let nf = n as f64;
        let mean = &sum / nf;
        let std = (&sum_sq / nf - &mean * &mean).mapv(|v| v.max(0.0).sqrt().max(STD_FLOOR));
        Ok(FeatureStats { mean: mean.to_vec(), std: std.to_vec() })
    }

    fn check(&self, m: &Array2<f64>) -> Result<(), FeatureError> {
        if m.ncols() != self.dim() {
            return Err(FeatureError::Dim { expected: self.dim(), got: m.ncols() });
        }
        Ok(())
    }

    pub fn apply(&self, m: &Array2<f64>) -> Result<Array2<f64>, FeatureError> {
        self.check(m)?;
        let mean = ArrayView1::from(&self.mean);
        let std = ArrayView1::from(&self.std);
        Ok((m - &mean) / &std)
    }

    pub fn invert(&self, m: &Array2<f64>) -> Result<Array2<f64>, FeatureError> {
        self.check(m)?;
        let mean = ArrayView1::from(&self.mean);
        let std = ArrayView1::from(&self.std);
        Ok(m * &std + &mean)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn pose_roundtrip_is_exact() {
        let sk = Skeleton::humanoid();
        let mut p = Pose::identity(sk.num_joints());
        p.rot6d[3] = [0.1, -0.2, 0.3, 0.4, 0.5, -0.6];
        p.root_translation = [1.5, -2.25, 0.875];
        let back = features_to_pose(&pose_features(&p), &sk).unwrap();
        assert_eq!(back, p);
        assert_eq!(pose_features(&p).len(), 135);
    }

    #[test]
    fn dimension_mismatch() {
        let sk = Skeleton::humanoid();
        assert_eq!(
            features_to_pose(&[0.0; 10], &sk),
            Err(FeatureError::Dim { expected: 135, got: 10 })
        );
        let stats = FeatureStats::identity(3);
        assert!(stats.apply(&Array2::zeros((2, 4))).is_err());
    }

    #[test]
    fn identity_stats_are_identity() {
        let m = array![[1.0, -2.0], [3.5, 0.25]];
        assert_eq!(FeatureStats::identity(2).apply(&m).unwrap(), m);
    }

    #[test]
    fn three_frame_stats() {
        // column 0: 1, 2, 6 -> mean 3, var (4 + 1 + 9) / 3
        // column 1: constant -> std floored
        let m = array![[1.0, 5.0], [2.0, 5.0], [6.0, 5.0]];
        let s = FeatureStats::from_features([&m]).unwrap();
        assert!((s.mean[0] - 3.0).abs() < 1e-12);
        assert!((s.std[0] - (14.0f64 / 3.0).sqrt()).abs() < 1e-12);
        assert_eq!(s.mean[1], 5.0);
        assert_eq!(s.std[1], STD_FLOOR);
        let back = s.invert(&s.apply(&m).unwrap()).unwrap();
        for (a, b) in back.iter().zip(m.iter()) {
            assert!((a - b).abs() < 1e-9);
        }
    }
}
