//! Poses, motions, rigid yaw transforms, canonicalization and the JSON
//! motion file format.

use std::path::Path;
use std::sync::Arc;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::io::{write_atomic, IoError};
use crate::rotation::{matrix_to_rot6d, rot6d_to_matrix, yaw_matrix, Rot6d, RotationError, IDENTITY_6D};
use crate::skeleton::{forward_kinematics, Skeleton, SkeletonError};

#[derive(Debug, Error)]
pub enum MotionError {
    #[error("motion has no frames")]
    Empty,
    #[error("fps must be positive and finite, got {0}")]
    BadFps(f64),
    #[error("frame {frame} has {got} joints, skeleton has {expected}")]
    JointCount { frame: usize, got: usize, expected: usize },
    #[error("frame range {start}..{end} out of bounds for {len} frames")]
    Range { start: usize, end: usize, len: usize },
    #[error("motions disagree on {0}")]
    Incompatible(&'static str),
    #[error(transparent)]
    Rotation(#[from] RotationError),
    #[error(transparent)]
    Skeleton(#[from] SkeletonError),
    #[error("invalid motion file: {0}")]
    Format(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] IoError),
}

/// One frame: a local 6D rotation per joint plus the root translation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    #[serde(rename = "root_t")]
    pub root_translation: [f64; 3],
    pub rot6d: Vec<Rot6d>,
}

impl Pose {
    pub fn identity(num_joints: usize) -> Self {
        Pose { root_translation: [0.0; 3], rot6d: vec![IDENTITY_6D; num_joints] }
    }

    pub fn num_joints(&self) -> usize {
        self.rot6d.len()
    }

    pub fn root(&self) -> Vector3<f64> {
        Vector3::from(self.root_translation)
    }

    pub fn root_matrix(&self) -> Result<Matrix3<f64>, RotationError> {
        rot6d_to_matrix(&self.rot6d[0])
    }

    /// Yaw of the body's forward (+y) direction about +z, in radians.
    /// Zero means facing +y.
    pub fn heading(&self) -> Result<f64, RotationError> {
        Ok(heading_of(&self.root_matrix()?))
    }
}

/// Heading of a root orientation: the forward axis projected onto the
/// horizontal plane, falling back to the right axis when the body is
/// pitched straight up or down.
pub fn heading_of(root: &Matrix3<f64>) -> f64 {
    let f = root * Vector3::y();
    if f.x.hypot(f.y) > 1e-9 {
        (-f.x).atan2(f.y)
    } else {
        let r = root * Vector3::x();
        r.y.atan2(r.x)
    }
}

/// A rotation about the vertical axis followed by a translation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidYaw {
    pub yaw: f64,
    pub translation: Vector3<f64>,
}

impl RigidYaw {
    pub const IDENTITY: RigidYaw = RigidYaw { yaw: 0.0, translation: Vector3::new(0.0, 0.0, 0.0) };

    pub fn new(yaw: f64, translation: Vector3<f64>) -> Self {
        RigidYaw { yaw, translation }
    }

    pub fn apply_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        yaw_matrix(self.yaw) * p + self.translation
    }

    pub fn apply_pose(&self, pose: &Pose) -> Result<Pose, RotationError> {
        let rz = yaw_matrix(self.yaw);
        let mut out = pose.clone();
        out.rot6d[0] = matrix_to_rot6d(&(rz * pose.root_matrix()?));
        out.root_translation = (rz * pose.root() + self.translation).into();
        Ok(out)
    }

    pub fn inverse(&self) -> RigidYaw {
        let rz_inv = yaw_matrix(-self.yaw);
        RigidYaw { yaw: -self.yaw, translation: -(rz_inv * self.translation) }
    }

    /// `self` applied after `first`.
    pub fn after(&self, first: &RigidYaw) -> RigidYaw {
        RigidYaw {
            yaw: self.yaw + first.yaw,
            translation: yaw_matrix(self.yaw) * first.translation + self.translation,
        }
    }

    /// Transform that moves `pose` to the origin (x = y = 0, height kept)
    /// facing +y.
    pub fn canonicalizing(pose: &Pose) -> Result<RigidYaw, RotationError> {
        let yaw = -pose.heading()?;
        let r = pose.root();
        let t = -(yaw_matrix(yaw) * Vector3::new(r.x, r.y, 0.0));
        Ok(RigidYaw { yaw, translation: t })
    }
}

/// Timed pose sequence on a shared skeleton.
#[derive(Debug, Clone, PartialEq)]
pub struct Motion {
    frames: Vec<Pose>,
    fps: f64,
    skeleton: Arc<Skeleton>,
}

impl Motion {
    pub fn new(frames: Vec<Pose>, fps: f64, skeleton: Arc<Skeleton>) -> Result<Self, MotionError> {
        if frames.is_empty() {
            return Err(MotionError::Empty);
        }
        if !(fps > 0.0 && fps.is_finite()) {
            return Err(MotionError::BadFps(fps));
        }
        let expected = skeleton.num_joints();
        for (i, f) in frames.iter().enumerate() {
            if f.rot6d.len() != expected {
                return Err(MotionError::JointCount { frame: i, got: f.rot6d.len(), expected });
            }
        }
        Ok(Motion { frames, fps, skeleton })
    }

    pub fn frames(&self) -> &[Pose] {
        &self.frames
    }

    pub fn into_frames(self) -> Vec<Pose> {
        self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn fps(&self) -> f64 {
        self.fps
    }

    pub fn skeleton(&self) -> &Arc<Skeleton> {
        &self.skeleton
    }

    pub fn duration_seconds(&self) -> f64 {
        self.frames.len() as f64 / self.fps
    }

    pub fn first(&self) -> &Pose {
        &self.frames[0]
    }

    pub fn last(&self) -> &Pose {
        &self.frames[self.frames.len() - 1]
    }

    /// Same skeleton and fps, new frames.
    pub fn with_frames(&self, frames: Vec<Pose>) -> Result<Motion, MotionError> {
        Motion::new(frames, self.fps, self.skeleton.clone())
    }

    /// Frames `[start, end)`.
    pub fn slice(&self, start: usize, end: usize) -> Result<Motion, MotionError> {
        if start >= end || end > self.frames.len() {
            return Err(MotionError::Range { start, end, len: self.frames.len() });
        }
        self.with_frames(self.frames[start..end].to_vec())
    }

    pub fn check_compatible(&self, other: &Motion) -> Result<(), MotionError> {
        if self.skeleton != other.skeleton {
            return Err(MotionError::Incompatible("skeleton"));
        }
        if (self.fps - other.fps).abs() > 1e-9 {
            return Err(MotionError::Incompatible("fps"));
        }
        Ok(())
    }

    pub fn concat(&self, other: &Motion) -> Result<Motion, MotionError> {
        self.check_compatible(other)?;
        let mut frames = self.frames.clone();
        frames.extend_from_slice(&other.frames);
        self.with_frames(frames)
    }

    pub fn transformed(&self, t: &RigidYaw) -> Result<Motion, MotionError> {
        let frames = self.frames.iter().map(|p| t.apply_pose(p)).collect::<Result<Vec<_>, _>>()?;
        self.with_frames(frames)
    }

    /// Global joint positions per frame.
    pub fn joint_positions(&self) -> Result<Vec<Vec<Vector3<f64>>>, MotionError> {
        self.frames
            .iter()
            .map(|p| forward_kinematics(p, &self.skeleton).map_err(MotionError::from))
            .collect()
    }

    pub fn to_file(&self, labels: Option<Vec<FrameLabel>>) -> MotionFile {
        MotionFile {
            fps: self.fps,
            skeleton: (*self.skeleton).clone(),
            frames: self.frames.clone(),
            labels,
        }
    }
}

/// Rigidly move the whole motion so that frame 0 sits at the origin (height
/// kept) facing +y.
pub fn canonicalize(motion: &Motion) -> Result<Motion, MotionError> {
    let t = RigidYaw::canonicalizing(motion.first())?;
    motion.transformed(&t)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameLabel {
    pub text: String,
    pub start_frame: usize,
    pub end_frame: usize,
}

/// On-disk motion representation (UTF-8 JSON).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionFile {
    pub fps: f64,
    pub skeleton: Skeleton,
    pub frames: Vec<Pose>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<FrameLabel>>,
}

impl MotionFile {
    pub fn into_motion(self) -> Result<(Motion, Option<Vec<FrameLabel>>), MotionError> {
        let motion = Motion::new(self.frames, self.fps, Arc::new(self.skeleton))?;
        if let Some(labels) = &self.labels {
            for l in labels {
                if l.start_frame >= l.end_frame || l.end_frame > motion.len() {
                    return Err(MotionError::Range { start: l.start_frame, end: l.end_frame, len: motion.len() });
                }
            }
        }
        Ok((motion, self.labels))
    }

    pub fn to_json_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("motion file serializes")
    }

    pub fn from_json_bytes(bytes: &[u8]) -> Result<Self, MotionError> {
        Ok(serde_json::from_slice(bytes)?)
    }

    pub fn read(path: &Path) -> Result<Self, MotionError> {
        let bytes = std::fs::read(path).map_err(|e| IoError::new(path, e))?;
        Self::from_json_bytes(&bytes)
    }

    pub fn write(&self, path: &Path) -> Result<(), MotionError> {
        write_atomic(path, &self.to_json_bytes())?;
        Ok(())
    }
}
