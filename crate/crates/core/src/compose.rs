//! Multi-action composition: per-action generation, rigid alignment of each
//! new action to the end of the previous one, and slerp stitching.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{next_action, Model, ModelError, ModelKind, Prompt, Sampling};
use crate::motion::{Motion, MotionError, Pose, RigidYaw};
use crate::rotation::{quat_to_rot6d, rot6d_to_quat, slerp, RotationError};
use crate::text::comma_join;

pub const DEFAULT_SLERP_FRAMES: usize = 8;

#[derive(Debug, Error)]
pub enum ComposeError {
    #[error("slerp window of {n} frames exceeds second motion of {len} frames")]
    Window { n: usize, len: usize },
    #[error("joint composition takes exactly 2 prompts, got {0}")]
    JointArity(usize),
    #[error("no prompts")]
    NoPrompts,
    #[error("strategy {strategy:?} needs a {expected:?} model, got {got:?}")]
    WrongModel { strategy: Strategy, expected: ModelKind, got: ModelKind },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Motion(#[from] MotionError),
    #[error(transparent)]
    Rotation(#[from] RotationError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Independent,
    Joint,
    Teach,
}

impl Strategy {
    pub fn for_kind(kind: ModelKind) -> Strategy {
        match kind {
            ModelKind::Independent => Strategy::Independent,
            ModelKind::Joint => Strategy::Joint,
            ModelKind::Teach => Strategy::Teach,
        }
    }

    pub fn model_kind(self) -> ModelKind {
        match self {
            Strategy::Independent => ModelKind::Independent,
            Strategy::Joint => ModelKind::Joint,
            Strategy::Teach => ModelKind::Teach,
        }
    }
}

impl std::str::FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_lowercase().as_str() {
            "independent" => Ok(Strategy::Independent),
            "joint" => Ok(Strategy::Joint),
            "teach" => Ok(Strategy::Teach),
            other => Err(format!("unknown strategy {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StitchMode {
    /// Replace the first frames of the second motion.
    Overwrite,
    /// Add new frames between the two motions.
    Insert,
}

impl std::str::FromStr for StitchMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_lowercase().as_str() {
            "overwrite" => Ok(StitchMode::Overwrite),
            "insert" => Ok(StitchMode::Insert),
            other => Err(format!("unknown stitch mode {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StitchConfig {
    pub slerp_frames: usize,
    pub mode: StitchMode,
}

impl Default for StitchConfig {
    fn default() -> Self {
        StitchConfig { slerp_frames: DEFAULT_SLERP_FRAMES, mode: StitchMode::Overwrite }
    }
}

/// Half-open frame interval of one prompt in a composed motion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompositionRequest {
    pub prompts: Vec<Prompt>,
    pub strategy: Strategy,
    #[serde(default)]
    pub stitch: StitchConfig,
    pub sampling: Sampling,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Composition {
    pub motion: Motion,
    pub spans: Vec<Span>,
    /// Generated actions before alignment and stitching.
    pub actions: Vec<Motion>,
}

/// Rigid yaw + horizontal translation placing `second`'s first frame on
/// `first`'s last frame (position and heading; height untouched).
pub fn alignment(first: &Motion, second: &Motion) -> Result<RigidYaw, ComposeError> {
    let to_origin = RigidYaw::canonicalizing(second.first())?;
    let to_end = RigidYaw::canonicalizing(first.last())?.inverse();
    Ok(to_end.after(&to_origin))
}

pub fn align_second(first: &Motion, second: &Motion) -> Result<Motion, ComposeError> {
    first.check_compatible(second)?;
    Ok(second.transformed(&alignment(first, second)?)?)
}

/// Per-joint slerp and linear root interpolation between two poses.
pub fn interpolate_pose(a: &Pose, b: &Pose, t: f64) -> Result<Pose, RotationError> {
    let rot6d = a
        .rot6d
        .iter()
        .zip(&b.rot6d)
        .map(|(ra, rb)| quat_to_rot6d(&slerp(&rot6d_to_quat(ra)?, &rot6d_to_quat(rb)?, t)))
        .collect::<Result<Vec<_>, _>>()?;
    let mut root = [0.0; 3];
    for k in 0..3 {
        root[k] = a.root_translation[k] + (b.root_translation[k] - a.root_translation[k]) * t;
    }
    Ok(Pose { root_translation: root, rot6d })
}

/// Join two motions with an `n`-frame slerp window.
///
/// Overwrite mode replaces the first `n` frames of `second` by the
/// interpolation from `first`'s last pose towards `second[n]` (towards its
/// last frame when `n` equals its length). Insert mode adds `n` frames
/// interpolated from `first`'s last pose to `second`'s first. Endpoint
/// frames of both inputs are kept.
pub fn slerp_stitch(first: &Motion, second: &Motion, n: usize, mode: StitchMode) -> Result<Motion, ComposeError> {
    first.check_compatible(second)?;
    let a = first.last();
    let mut frames = first.frames().to_vec();
    match mode {
        StitchMode::Overwrite => {
            let len = second.len();
            if n > len {
                return Err(ComposeError::Window { n, len });
            }
            if n > 0 {
                let target = n.min(len - 1);
                let b = &second.frames()[target];
                for k in 0..n {
                    if k == target {
                        frames.push(b.clone());
                    } else {
                        frames.push(interpolate_pose(a, b, (k + 1) as f64 / (target + 1) as f64)?);
                    }
                }
            }
            frames.extend_from_slice(&second.frames()[n..]);
        }
        StitchMode::Insert => {
            let b = second.first();
            for k in 0..n {
                frames.push(interpolate_pose(a, b, (k + 1) as f64 / (n + 1) as f64)?);
            }
            frames.extend_from_slice(second.frames());
        }
    }
    Ok(first.with_frames(frames)?)
}

/// Accumulated output of an incremental composition. Appending never
/// mutates: it returns the next state, so a failed append leaves the
/// previous state intact.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CompositionState {
    pub prompts: Vec<Prompt>,
    pub actions: Vec<Motion>,
    pub spans: Vec<Span>,
    pub motion: Option<Motion>,
}

impl CompositionState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.prompts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prompts.is_empty()
    }

    /// Generate the next action (conditioned on the previous one when the
    /// model supports it), align it to the composed motion and stitch it on.
    /// Action `i` samples with `sampling.child(i)`.
    pub fn append(
        &self,
        model: &Model,
        prompt: Prompt,
        stitch: StitchConfig,
        sampling: Sampling,
    ) -> Result<(CompositionState, Span), ComposeError> {
        let i = self.prompts.len() as u64;
        let action = next_action(model, self.actions.last(), &prompt, sampling.child(i))?;
        let (motion, span) = match &self.motion {
            None => {
                let span = Span { start: 0, end: action.len() };
                (action.clone(), span)
            }
            Some(acc) => {
                let aligned = align_second(acc, &action)?;
                let out = slerp_stitch(acc, &aligned, stitch.slerp_frames, stitch.mode)?;
                let span = Span { start: acc.len(), end: out.len() };
                (out, span)
            }
        };
        let mut next = self.clone();
        next.prompts.push(prompt);
        next.actions.push(action);
        next.spans.push(span);
        next.motion = Some(motion);
        Ok((next, span))
    }
}

/// Compose all prompts with one strategy. The model must be trained for
/// that strategy.
pub fn compose(request: &CompositionRequest, model: &Model) -> Result<Composition, ComposeError> {
    let expected = request.strategy.model_kind();
    if model.kind != expected {
        return Err(ComposeError::WrongModel { strategy: request.strategy, expected, got: model.kind });
    }
    if request.prompts.is_empty() {
        return Err(ComposeError::NoPrompts);
    }
    match request.strategy {
        Strategy::Joint => {
            if request.prompts.len() != 2 {
                return Err(ComposeError::JointArity(request.prompts.len()));
            }
            let f1 = model.frames_for(request.prompts[0].duration_s)?;
            let f2 = model.frames_for(request.prompts[1].duration_s)?;
            let text = comma_join(&[&request.prompts[0].text, &request.prompts[1].text]);
            let motion = model.generate(&text, f1 + f2, None, request.sampling.child(0))?;
            let spans = vec![Span { start: 0, end: f1 }, Span { start: f1, end: f1 + f2 }];
            let actions = vec![motion.slice(0, f1)?, motion.slice(f1, f1 + f2)?];
            Ok(Composition { motion, spans, actions })
        }
        Strategy::Independent | Strategy::Teach => {
            let mut state = CompositionState::new();
            for p in &request.prompts {
                state = state.append(model, p.clone(), request.stitch, request.sampling)?.0;
            }
            Ok(Composition {
                motion: state.motion.expect("at least one prompt"),
                spans: state.spans,
                actions: state.actions,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::skeleton::Skeleton;
    use nalgebra::Vector3;
    use std::sync::Arc;

    fn walking(n: usize, yaw: f64, start: [f64; 2]) -> Motion {
        let sk = Arc::new(Skeleton::humanoid());
        let t = RigidYaw::new(yaw, Vector3::new(start[0], start[1], 0.0));
        let frames = (0..n)
            .map(|i| {
                let p = Pose { root_translation: [0.0, 0.05 * i as f64, 0.92], ..Pose::identity(22) };
                t.apply_pose(&p).unwrap()
            })
            .collect();
        Motion::new(frames, 30.0, sk).unwrap()
    }

    #[test]
    fn lengths() {
        let a = walking(60, 0.0, [0.0, 0.0]);
        let b = walking(45, 0.0, [0.0, 0.0]);
        assert_eq!(slerp_stitch(&a, &b, 8, StitchMode::Overwrite).unwrap().len(), 105);
        assert_eq!(slerp_stitch(&a, &b, 8, StitchMode::Insert).unwrap().len(), 113);
        let plain = slerp_stitch(&a, &b, 0, StitchMode::Overwrite).unwrap();
        assert_eq!(plain, a.concat(&b).unwrap());
        assert!(matches!(slerp_stitch(&a, &b, 46, StitchMode::Overwrite), Err(ComposeError::Window { .. })));
    }

    #[test]
    fn align_places_start_on_end() {
        let a = walking(10, 1.2, [2.0, 3.0]);
        let b = walking(10, -0.4, [-5.0, 1.0]);
        let c = align_second(&a, &b).unwrap();
        let (end, start) = (a.last(), c.first());
        for k in 0..2 {
            assert!((end.root_translation[k] - start.root_translation[k]).abs() < 1e-12);
        }
        assert!((end.heading().unwrap() - start.heading().unwrap()).abs() < 1e-12);
        assert_eq!(start.root_translation[2], b.first().root_translation[2]);
    }
}
