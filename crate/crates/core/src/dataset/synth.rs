//! Procedural labeled motion: parametric kinematic generators for a small
//! action vocabulary, chained through a persistent body state (position,
//! heading, seated level, arm elevation) so each action starts where the
//! previous one ended.

use std::f64::consts::{FRAC_PI_2, PI};
use std::sync::Arc;

use nalgebra::{Matrix3, Vector3};
use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{DatasetError, LabeledSegment, SequenceRecord};
use crate::motion::{Motion, Pose};
use crate::rng::stream;
use crate::rotation::{matrix_to_rot6d, quat_to_rot6d, rot6d_to_quat, slerp, yaw_matrix};
use crate::skeleton::{forward_kinematics, Skeleton};

pub const SYNTH_FPS: f64 = 30.0;
pub const TRANSITION_NAME: &str = "transition";

pub const ACTION_NAMES: [&str; 10] = [
    "walk-forward",
    "turn-left",
    "turn-right",
    "wave-right-hand",
    "raise-left-hand",
    "sit-down",
    "stand-up",
    "squat",
    "kick-left-foot",
    "step-right",
];

const REST_ARM: f64 = 0.15;
const RAISED_ARM: f64 = 1.85;
const THIGH: f64 = 0.39;
const BLEND_S: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ActionKind {
    WalkForward,
    TurnLeft,
    TurnRight,
    WaveRightHand,
    RaiseLeftHand,
    SitDown,
    StandUp,
    Squat,
    KickLeftFoot,
    StepRight,
    Transition,
}

impl ActionKind {
    pub const ALL: [ActionKind; 10] = [
        ActionKind::WalkForward,
        ActionKind::TurnLeft,
        ActionKind::TurnRight,
        ActionKind::WaveRightHand,
        ActionKind::RaiseLeftHand,
        ActionKind::SitDown,
        ActionKind::StandUp,
        ActionKind::Squat,
        ActionKind::KickLeftFoot,
        ActionKind::StepRight,
    ];

    pub fn from_name(name: &str) -> Result<Self, DatasetError> {
        let n = name.trim().to_lowercase();
        if n == TRANSITION_NAME {
            return Ok(ActionKind::Transition);
        }
        ACTION_NAMES
            .iter()
            .position(|a| *a == n)
            .map(|i| Self::ALL[i])
            .ok_or_else(|| DatasetError::UnknownAction(name.to_string()))
    }

    pub fn name(self) -> &'static str {
        match self {
            ActionKind::Transition => TRANSITION_NAME,
            k => ACTION_NAMES[Self::ALL.iter().position(|a| *a == k).unwrap()],
        }
    }
}

/// The three text templates used for an action's label.
pub fn phrasings(kind: ActionKind) -> [&'static str; 3] {
    match kind {
        ActionKind::WalkForward => ["walk forward", "walk straight ahead", "a person walks forwards"],
        ActionKind::TurnLeft => ["turn left", "turn to the left", "turning around to the left"],
        ActionKind::TurnRight => ["turn right", "turn to the right", "turning around to the right"],
        ActionKind::WaveRightHand => ["wave the right hand", "right hand wave", "waving with right hand"],
        ActionKind::RaiseLeftHand => ["raise the left hand", "lift left hand up", "raising the left arm"],
        ActionKind::SitDown => ["sit down", "take a seat", "sitting down on a chair"],
        ActionKind::StandUp => ["stand up", "get up from the seat", "rise to a standing position"],
        ActionKind::Squat => ["squat", "do a squat", "squatting down and up"],
        ActionKind::KickLeftFoot => ["kick with the left foot", "left foot kick", "kicking with left leg"],
        ActionKind::StepRight => ["step to the right", "sidestep right", "take a step to the right"],
        ActionKind::Transition => [TRANSITION_NAME; 3],
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionSpec {
    pub action_name: String,
    pub duration_s: f64,
}

impl ActionSpec {
    pub fn new(action_name: impl Into<String>, duration_s: f64) -> Self {
        ActionSpec { action_name: action_name.into(), duration_s }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct BodyState {
    anchor: [f64; 2],
    yaw: f64,
    sit: f64,
    arms: [f64; 2],
}

impl BodyState {
    const START: BodyState = BodyState { anchor: [0.0, 0.0], yaw: 0.0, sit: 0.0, arms: [REST_ARM, REST_ARM] };

    fn forward(&self) -> [f64; 2] {
        [-self.yaw.sin(), self.yaw.cos()]
    }

    fn right(&self) -> [f64; 2] {
        [self.yaw.cos(), self.yaw.sin()]
    }
}

/// Joint-space controls; index 0 is the left side, 1 the right.
#[derive(Debug, Clone, Copy, Default)]
struct PoseParams {
    anchor: [f64; 2],
    yaw: f64,
    sit: f64,
    squat: f64,
    lean: f64,
    spine_twist: f64,
    head_yaw: f64,
    hip_flex: [f64; 2],
    hip_abd: [f64; 2],
    knee: [f64; 2],
    arm_elev: [f64; 2],
    arm_swing: [f64; 2],
    elbow: [f64; 2],
}

impl PoseParams {
    fn neutral(s: &BodyState) -> Self {
        PoseParams { anchor: s.anchor, yaw: s.yaw, sit: s.sit, arm_elev: s.arms, ..Default::default() }
    }
}

/// Seeded per-action style variation.
#[derive(Debug, Clone, Copy)]
struct Style {
    amp: f64,
    speed: f64,
    freq: f64,
    turn: f64,
    step: f64,
    head_phase: f64,
}

impl Style {
    fn sample<R: Rng>(rng: &mut R) -> Self {
        Style {
            amp: rng.random_range(0.85..1.15),
            speed: rng.random_range(0.8..1.3),
            freq: rng.random_range(0.8..1.1),
            turn: rng.random_range(60f64..120.0).to_radians(),
            step: rng.random_range(0.25..0.45),
            head_phase: rng.random_range(0.0..2.0 * PI),
        }
    }
}

fn smoothstep(x: f64) -> f64 {
    let x = x.clamp(0.0, 1.0);
    x * x * (3.0 - 2.0 * x)
}

fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a + (b - a) * t
}

/// Ramps in over the first and out over the last 20% of the action.
fn envelope(u: f64) -> f64 {
    smoothstep(u / 0.2) * smoothstep((1.0 - u) / 0.2)
}

fn bump(u: f64) -> f64 {
    (PI * u).sin().powi(2)
}

fn rx(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

fn ry(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

fn action_params(kind: ActionKind, s: &BodyState, style: &Style, u: f64, dur: f64) -> PoseParams {
    let t = u * dur;
    let env = envelope(u);
    let mut p = PoseParams::neutral(s);
    p.head_yaw = 0.08 * env * (2.0 * PI * 0.3 * t + style.head_phase).sin();
    let to_rest = |p: &mut PoseParams, w: f64| {
        p.arm_elev = [lerp(s.arms[0], REST_ARM, w), lerp(s.arms[1], REST_ARM, w)];
    };
    let to_standing = |p: &mut PoseParams, w: f64| p.sit = lerp(s.sit, 0.0, w);
    match kind {
        ActionKind::WalkForward => {
            let early = smoothstep(u / 0.3);
            to_rest(&mut p, early);
            to_standing(&mut p, early);
            let d = style.speed * dur * smoothstep(u);
            let f = s.forward();
            p.anchor = [s.anchor[0] + f[0] * d, s.anchor[1] + f[1] * d];
            let phase = 2.0 * PI * style.freq * t;
            let a = 0.45 * style.amp * env;
            p.hip_flex = [a * phase.sin(), -a * phase.sin()];
            p.knee = [0.35 * env * (1.0 - phase.cos()), 0.35 * env * (1.0 + phase.cos())];
            p.arm_swing = [-0.35 * env * phase.sin(), 0.35 * env * phase.sin()];
        }
        ActionKind::TurnLeft | ActionKind::TurnRight => {
            let early = smoothstep(u / 0.3);
            to_rest(&mut p, early);
            to_standing(&mut p, early);
            let sign = if kind == ActionKind::TurnLeft { 1.0 } else { -1.0 };
            p.yaw = s.yaw + sign * style.turn * smoothstep(u);
            let phase = 2.0 * PI * 1.2 * t;
            p.hip_flex = [0.15 * env * phase.sin(), -0.15 * env * phase.sin()];
            p.knee = [0.2 * env * (1.0 - phase.cos()), 0.2 * env * (1.0 + phase.cos())];
            p.spine_twist = sign * 0.15 * bump(u);
        }
        ActionKind::WaveRightHand => {
            let up = smoothstep(u / 0.35) * smoothstep((1.0 - u) / 0.35);
            p.arm_elev[1] = lerp(s.arms[1], 1.75 * style.amp, up);
            p.elbow[1] = 0.5 * up * (2.0 * PI * (1.5 + style.freq) * t).sin();
        }
        ActionKind::RaiseLeftHand => {
            p.arm_elev[0] = lerp(s.arms[0], RAISED_ARM, smoothstep(u / 0.6));
        }
        ActionKind::SitDown => {
            p.sit = lerp(s.sit, 1.0, smoothstep(u));
            p.lean = 0.4 * style.amp * bump(u);
        }
        ActionKind::StandUp => {
            p.sit = lerp(s.sit, 0.0, smoothstep(u));
            p.lean = 0.45 * style.amp * bump(u);
        }
        ActionKind::Squat => {
            p.squat = 1.1 * style.amp * bump(u);
            p.arm_swing = [0.9 * bump(u), 0.9 * bump(u)];
        }
        ActionKind::KickLeftFoot => {
            p.hip_flex[0] = 1.2 * style.amp * bump(u);
            p.knee[0] = 0.9 * bump(u) * (1.0 - u);
            p.arm_swing = [0.3 * bump(u), -0.3 * bump(u)];
            p.lean = -0.15 * bump(u);
        }
        ActionKind::StepRight => {
            to_standing(&mut p, smoothstep(u / 0.3));
            let d = style.step * smoothstep(u);
            let r = s.right();
            p.anchor = [s.anchor[0] + r[0] * d, s.anchor[1] + r[1] * d];
            p.hip_abd = [0.1 * bump(u), 0.3 * style.amp * bump(u)];
        }
        ActionKind::Transition => {
            p.lean = 0.05 * bump(u);
        }
    }
    p
}

fn end_state(kind: ActionKind, s: &BodyState, style: &Style, dur: f64) -> BodyState {
    let p = action_params(kind, s, style, 1.0, dur);
    BodyState { anchor: p.anchor, yaw: p.yaw, sit: p.sit, arms: p.arm_elev }
}

struct Rig {
    skeleton: Arc<Skeleton>,
    idx: RigIndex,
}

struct RigIndex {
    spine1: usize,
    hips: [usize; 2],
    knees: [usize; 2],
    ankles: [usize; 2],
    spine2: usize,
    shoulders: [usize; 2],
    elbows: [usize; 2],
    head: usize,
}

impl Rig {
    fn humanoid() -> Self {
        let skeleton = Arc::new(Skeleton::humanoid());
        let j = |n: &str| skeleton.joint_index(n).expect("humanoid joint");
        let idx = RigIndex {
            spine1: j("spine1"),
            hips: [j("left_hip"), j("right_hip")],
            knees: [j("left_knee"), j("right_knee")],
            ankles: [j("left_ankle"), j("right_ankle")],
            spine2: j("spine2"),
            shoulders: [j("left_shoulder"), j("right_shoulder")],
            elbows: [j("left_elbow"), j("right_elbow")],
            head: j("head"),
        };
        Rig { skeleton, idx }
    }

    fn pose(&self, p: &PoseParams) -> Pose {
        let ix = &self.idx;
        let mut pose = Pose::identity(self.skeleton.num_joints());
        let set = |pose: &mut Pose, j: usize, m: Matrix3<f64>| pose.rot6d[j] = matrix_to_rot6d(&m);
        let sit_angle = p.sit * FRAC_PI_2;
        set(&mut pose, 0, yaw_matrix(p.yaw));
        set(&mut pose, ix.spine1, rx(-(p.lean + 0.3 * p.squat)));
        set(&mut pose, ix.spine2, yaw_matrix(p.spine_twist));
        for side in 0..2 {
            let hip = sit_angle + p.squat + p.hip_flex[side];
            let knee = sit_angle + 2.0 * p.squat + p.knee[side];
            let abd = if side == 0 { p.hip_abd[side] } else { -p.hip_abd[side] };
            set(&mut pose, ix.hips[side], rx(hip) * ry(abd));
            set(&mut pose, ix.knees[side], rx(-knee));
            set(&mut pose, ix.ankles[side], rx(p.squat));
            let elev = (p.arm_elev[side] - 1.0) * FRAC_PI_2;
            let elev = if side == 0 { elev } else { -elev };
            set(&mut pose, ix.shoulders[side], rx(p.arm_swing[side]) * ry(elev));
            let elbow = if side == 0 { p.elbow[side] } else { -p.elbow[side] };
            set(&mut pose, ix.elbows[side], ry(elbow));
        }
        set(&mut pose, ix.head, yaw_matrix(p.head_yaw));

        let seat_back = yaw_matrix(p.yaw) * Vector3::new(0.0, -THIGH * sit_angle.sin(), 0.0);
        pose.root_translation = [p.anchor[0] + seat_back.x, p.anchor[1] + seat_back.y, 0.0];
        self.ground(&mut pose);
        pose
    }

    /// Ground contact: the lowest joint touches z = 0.
    fn ground(&self, pose: &mut Pose) {
        pose.root_translation[2] = 0.0;
        let joints = forward_kinematics(pose, &self.skeleton).expect("rig pose matches skeleton");
        let lowest = joints.iter().map(|j| j.z).fold(f64::INFINITY, f64::min);
        pose.root_translation[2] = -lowest;
    }
}

fn blend(a: &Pose, b: &Pose, w: f64) -> Pose {
    let rot6d = a
        .rot6d
        .iter()
        .zip(&b.rot6d)
        .map(|(ra, rb)| {
            let qa = rot6d_to_quat(ra).expect("valid rotation");
            let qb = rot6d_to_quat(rb).expect("valid rotation");
            quat_to_rot6d(&slerp(&qa, &qb, w)).expect("unit quaternion")
        })
        .collect();
    let mut root = [0.0; 3];
    for k in 0..3 {
        root[k] = lerp(a.root_translation[k], b.root_translation[k], w);
    }
    Pose { root_translation: root, rot6d }
}

/// Generate one continuous labeled sequence. Deterministic in `seed`.
///
/// Each action gets `round(duration_s * 30)` frames and one label; labels of
/// consecutive actions overlap by a seeded 0.2-0.6 s (capped at half the
/// shorter neighbour). The action name `"transition"` produces a short
/// neutral hold labeled as a transition.
pub fn synth_generate(actions: &[ActionSpec], seed: u64) -> Result<SequenceRecord, DatasetError> {
    if actions.is_empty() {
        return Err(DatasetError::InvalidSpec("no actions".into()));
    }
    let kinds = actions
        .iter()
        .map(|a| {
            if !(a.duration_s > 0.0 && a.duration_s.is_finite()) {
                return Err(DatasetError::InvalidSpec(format!("duration {} for {:?}", a.duration_s, a.action_name)));
            }
            ActionKind::from_name(&a.action_name)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let counts: Vec<usize> = actions.iter().map(|a| ((a.duration_s * SYNTH_FPS).round() as usize).max(1)).collect();

    let rig = Rig::humanoid();
    let mut rng = stream(seed, &[0x5e9]);
    let mut state = BodyState::START;
    let mut frames: Vec<Pose> = Vec::with_capacity(counts.iter().sum());
    let mut texts = Vec::with_capacity(actions.len());
    for (k, (&kind, &n)) in kinds.iter().zip(&counts).enumerate() {
        let style = Style::sample(&mut rng);
        texts.push(phrasings(kind).choose(&mut rng).copied().unwrap_or(TRANSITION_NAME).to_string());
        let dur = n as f64 / SYNTH_FPS;
        let blend_n = if k == 0 { 0 } else { ((BLEND_S * SYNTH_FPS).round() as usize).min(n / 2) };
        let held = frames.last().cloned();
        for i in 0..n {
            let u = i as f64 / n as f64;
            let pose = rig.pose(&action_params(kind, &state, &style, u, dur));
            let pose = match &held {
                Some(prev) if i < blend_n => {
                    let mut b = blend(prev, &pose, smoothstep((i + 1) as f64 / (blend_n + 1) as f64));
                    rig.ground(&mut b);
                    b
                }
                _ => pose,
            };
            frames.push(pose);
        }
        state = end_state(kind, &state, &style, dur);
    }

    // Label boundaries with seeded overlaps.
    let mut bounds = Vec::with_capacity(counts.len() + 1);
    bounds.push(0usize);
    for n in &counts {
        bounds.push(bounds.last().unwrap() + n);
    }
    let mut lo = vec![0usize; counts.len() + 1];
    let mut hi = vec![0usize; counts.len() + 1];
    for k in 1..counts.len() {
        let cap = counts[k - 1].min(counts[k]) / 2;
        let ov = ((rng.random_range(0.2..0.6) * SYNTH_FPS).round() as usize).min(cap);
        lo[k] = ov / 2;
        hi[k] = ov - ov / 2;
    }
    let segments = (0..counts.len())
        .map(|k| LabeledSegment::new(texts[k].clone(), bounds[k] - lo[k], bounds[k + 1] + hi[k + 1]))
        .collect::<Result<Vec<_>, _>>()?;
    let motion = Motion::new(frames, SYNTH_FPS, rig.skeleton.clone())?;
    SequenceRecord::new(motion, segments)
}

/// Random corpus layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusConfig {
    pub sequences: usize,
    pub min_actions: usize,
    pub max_actions: usize,
    pub min_duration_s: f64,
    pub max_duration_s: f64,
    /// Probability of gluing two actions with a labeled transition instead
    /// of a plain label overlap.
    pub transition_prob: f64,
    pub seed: u64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            sequences: 250,
            min_actions: 3,
            max_actions: 3,
            min_duration_s: 1.0,
            max_duration_s: 1.6,
            transition_prob: 0.3,
            seed: 0,
        }
    }
}

/// A plausible action list: seated bodies only stand up or move their arms,
/// standing bodies do anything but stand up.
pub fn random_action_plan<R: Rng>(rng: &mut R, config: &CorpusConfig) -> Vec<ActionSpec> {
    let n = rng.random_range(config.min_actions..=config.max_actions.max(config.min_actions));
    let mut seated = false;
    let mut out = Vec::new();
    for k in 0..n {
        let choices: Vec<ActionKind> = ActionKind::ALL
            .iter()
            .copied()
            .filter(|a| match a {
                ActionKind::StandUp => seated,
                ActionKind::WaveRightHand | ActionKind::RaiseLeftHand => true,
                _ => !seated,
            })
            .collect();
        let kind = *choices.choose(rng).expect("non-empty vocabulary");
        match kind {
            ActionKind::SitDown => seated = true,
            ActionKind::StandUp => seated = false,
            _ => {}
        }
        if k > 0 && rng.random_bool(config.transition_prob) {
            out.push(ActionSpec::new(TRANSITION_NAME, rng.random_range(0.3..0.6)));
        }
        let dur = rng.random_range(config.min_duration_s..=config.max_duration_s);
        out.push(ActionSpec::new(kind.name(), (dur * 10.0).round() / 10.0));
    }
    out
}

pub fn synth_corpus(config: &CorpusConfig) -> Result<Vec<SequenceRecord>, DatasetError> {
    (0..config.sequences as u64)
        .map(|i| {
            let mut rng = stream(config.seed, &[0xc0, i]);
            let plan = random_action_plan(&mut rng, config);
            synth_generate(&plan, crate::rng::derive_seed(config.seed, &[0x5e, i]))
        })
        .collect()
}
