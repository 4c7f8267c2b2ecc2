//! Joint hierarchy and forward kinematics.
//!
//! Coordinates are z-up with the body facing +y in its rest pose, so +x
//! points to the body's right.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::motion::Pose;
use crate::rotation::{rot6d_to_matrix, RotationError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SkeletonError {
    #[error("skeleton needs at least 2 joints, got {0}")]
    TooFewJoints(usize),
    #[error("joint 0 must be the only root")]
    BadRoot,
    #[error("joint {joint} has parent {parent}; parents must precede children")]
    NotTopological { joint: usize, parent: usize },
    #[error("pose has {pose} joints but skeleton has {skeleton}")]
    JointCountMismatch { pose: usize, skeleton: usize },
    #[error(transparent)]
    Rotation(#[from] RotationError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Joint {
    pub name: String,
    pub parent: Option<usize>,
    /// Rest offset from the parent joint, in meters, in the parent's frame.
    pub offset: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Skeleton {
    joints: Vec<Joint>,
}

impl<'de> Deserialize<'de> for Skeleton {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            joints: Vec<Joint>,
        }
        let raw = Raw::deserialize(d)?;
        Skeleton::new(raw.joints).map_err(serde::de::Error::custom)
    }
}

/// Pelvis height above the ground for the default skeleton's rest pose.
pub const DEFAULT_ROOT_HEIGHT: f64 = 0.92;

const HUMANOID: [(&str, Option<usize>, [f64; 3]); 22] = [
    ("pelvis", None, [0.0, 0.0, 0.0]),
    ("left_hip", Some(0), [-0.09, 0.0, -0.08]),
    ("right_hip", Some(0), [0.09, 0.0, -0.08]),
    ("spine1", Some(0), [0.0, -0.02, 0.11]),
    ("left_knee", Some(1), [0.0, 0.0, -0.39]),
    ("right_knee", Some(2), [0.0, 0.0, -0.39]),
    ("spine2", Some(3), [0.0, 0.0, 0.13]),
    ("left_ankle", Some(4), [0.0, -0.03, -0.40]),
    ("right_ankle", Some(5), [0.0, -0.03, -0.40]),
    ("spine3", Some(6), [0.0, 0.0, 0.06]),
    ("left_foot", Some(7), [0.0, 0.12, -0.05]),
    ("right_foot", Some(8), [0.0, 0.12, -0.05]),
    ("neck", Some(9), [0.0, 0.0, 0.21]),
    ("left_collar", Some(9), [-0.07, 0.0, 0.11]),
    ("right_collar", Some(9), [0.07, 0.0, 0.11]),
    ("head", Some(12), [0.0, 0.03, 0.09]),
    ("left_shoulder", Some(13), [-0.12, 0.0, 0.02]),
    ("right_shoulder", Some(14), [0.12, 0.0, 0.02]),
    ("left_elbow", Some(16), [-0.26, 0.0, 0.0]),
    ("right_elbow", Some(17), [0.26, 0.0, 0.0]),
    ("left_wrist", Some(18), [-0.25, 0.0, 0.0]),
    ("right_wrist", Some(19), [0.25, 0.0, 0.0]),
];

impl Skeleton {
    pub fn new(joints: Vec<Joint>) -> Result<Self, SkeletonError> {
        if joints.len() < 2 {
            return Err(SkeletonError::TooFewJoints(joints.len()));
        }
        if joints[0].parent.is_some() {
            return Err(SkeletonError::BadRoot);
        }
        for (j, joint) in joints.iter().enumerate().skip(1) {
            match joint.parent {
                None => return Err(SkeletonError::BadRoot),
                Some(p) if p >= j => return Err(SkeletonError::NotTopological { joint: j, parent: p }),
                Some(_) => {}
            }
        }
        Ok(Skeleton { joints })
    }

    /// The built-in 22-joint humanoid.
    pub fn humanoid() -> Self {
        let joints = HUMANOID
            .iter()
            .map(|(name, parent, offset)| Joint { name: name.to_string(), parent: *parent, offset: *offset })
            .collect();
        Skeleton::new(joints).expect("built-in skeleton is valid")
    }

    pub fn joints(&self) -> &[Joint] {
        &self.joints
    }

    pub fn num_joints(&self) -> usize {
        self.joints.len()
    }

    pub fn joint_index(&self, name: &str) -> Option<usize> {
        self.joints.iter().position(|j| j.name == name)
    }

    pub fn offset(&self, j: usize) -> Vector3<f64> {
        Vector3::from(self.joints[j].offset)
    }
}

/// Global joint positions (meters) for one pose.
pub fn forward_kinematics(pose: &Pose, skeleton: &Skeleton) -> Result<Vec<Vector3<f64>>, SkeletonError> {
    let j = skeleton.num_joints();
    if pose.rot6d.len() != j {
        return Err(SkeletonError::JointCountMismatch { pose: pose.rot6d.len(), skeleton: j });
    }
    let mut global_rot: Vec<Matrix3<f64>> = Vec::with_capacity(j);
    let mut pos: Vec<Vector3<f64>> = Vec::with_capacity(j);
    for (idx, joint) in skeleton.joints.iter().enumerate() {
        let local = rot6d_to_matrix(&pose.rot6d[idx])?;
        match joint.parent {
            None => {
                global_rot.push(local);
                pos.push(Vector3::from(pose.root_translation));
            }
            Some(p) => {
                let p_pos = pos[p] + global_rot[p] * skeleton.offset(idx);
                global_rot.push(global_rot[p] * local);
                pos.push(p_pos);
            }
        }
    }
    Ok(pos)
}
