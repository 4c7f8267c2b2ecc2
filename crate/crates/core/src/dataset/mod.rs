//! Labeled sequences, action-pair extraction, filtering, batching and the
//! procedural corpus.

mod batch;
mod filter;
mod manifest;
mod synth;

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::motion::{FrameLabel, Motion, MotionError};

pub use batch::{batch_iterator, Batch, Batches, FrameCounts};
pub use filter::{
    crop_window, filter_and_resample, filter_pair, resample, FilterConfig, Filtered, Rejection, SegmentKind,
};
pub use manifest::{CorpusManifest, ManifestEntry, Split};
pub use synth::{
    phrasings, random_action_plan, synth_corpus, synth_generate, ActionKind, ActionSpec, CorpusConfig,
    ACTION_NAMES, SYNTH_FPS, TRANSITION_NAME,
};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("invalid record: {0}")]
    InvalidRecord(String),
    #[error("unknown action {0:?}")]
    UnknownAction(String),
    #[error("invalid action spec: {0}")]
    InvalidSpec(String),
    #[error("cannot resample {from} fps to {to} fps with an integer stride")]
    Fps { from: f64, to: f64 },
    #[error("dataset is empty")]
    Empty,
    #[error("batch size must be at least 1")]
    BatchSize,
    #[error("manifest: {0}")]
    Manifest(String),
    #[error(transparent)]
    Motion(#[from] MotionError),
}

/// Normalized label text: lowercase, trimmed.
fn norm_label(text: &str) -> String {
    text.trim().to_lowercase()
}

/// A text-labeled, half-open frame interval `[start_frame, end_frame)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledSegment {
    pub text: String,
    pub start_frame: usize,
    pub end_frame: usize,
    pub is_transition: bool,
}

impl LabeledSegment {
    pub fn new(text: impl Into<String>, start_frame: usize, end_frame: usize) -> Result<Self, DatasetError> {
        let text = text.into();
        if start_frame >= end_frame {
            return Err(DatasetError::InvalidRecord(format!(
                "segment {text:?} has empty interval [{start_frame}, {end_frame})"
            )));
        }
        let is_transition = norm_label(&text) == TRANSITION_NAME;
        Ok(LabeledSegment { text, start_frame, end_frame, is_transition })
    }

    pub fn len(&self) -> usize {
        self.end_frame - self.start_frame
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn overlaps(&self, other: &LabeledSegment) -> bool {
        self.start_frame < other.end_frame && other.start_frame < self.end_frame
    }

    /// `self` is a (non-strict) subset of `other`.
    pub fn is_within(&self, other: &LabeledSegment) -> bool {
        other.start_frame <= self.start_frame && self.end_frame <= other.end_frame
    }

    /// "t-pose" / "a-pose" calibration labels, never used for training.
    pub fn is_calibration_pose(&self) -> bool {
        let squashed: String = norm_label(&self.text).chars().filter(|c| c.is_alphanumeric()).collect();
        squashed == "tpose" || squashed == "apose"
    }

    /// Usable as an action-pair member or single training segment.
    pub fn is_action(&self) -> bool {
        !self.is_transition && !self.is_calibration_pose()
    }
}

/// A motion with its (possibly overlapping) labeled segments; every frame is
/// covered by at least one segment.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceRecord {
    pub motion: Motion,
    pub segments: Vec<LabeledSegment>,
}

impl SequenceRecord {
    pub fn new(motion: Motion, segments: Vec<LabeledSegment>) -> Result<Self, DatasetError> {
        let r = SequenceRecord { motion, segments };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        let n = self.motion.len();
        let mut covered = vec![false; n];
        for s in &self.segments {
            if s.start_frame >= s.end_frame || s.end_frame > n {
                return Err(DatasetError::InvalidRecord(format!(
                    "segment {:?} [{}, {}) outside motion of {} frames",
                    s.text, s.start_frame, s.end_frame, n
                )));
            }
            covered[s.start_frame..s.end_frame].iter_mut().for_each(|c| *c = true);
        }
        if let Some(f) = covered.iter().position(|c| !c) {
            return Err(DatasetError::InvalidRecord(format!("frame {f} is not covered by any segment")));
        }
        Ok(())
    }

    pub fn labels(&self) -> Vec<FrameLabel> {
        self.segments
            .iter()
            .map(|s| FrameLabel { text: s.text.clone(), start_frame: s.start_frame, end_frame: s.end_frame })
            .collect()
    }

    pub fn from_labels(motion: Motion, labels: &[FrameLabel]) -> Result<Self, DatasetError> {
        let segments = labels
            .iter()
            .map(|l| LabeledSegment::new(l.text.clone(), l.start_frame, l.end_frame))
            .collect::<Result<Vec<_>, _>>()?;
        SequenceRecord::new(motion, segments)
    }

    /// Action segments cut out as standalone motions.
    pub fn single_segments(&self) -> Result<Vec<(String, Motion)>, DatasetError> {
        self.segments
            .iter()
            .filter(|s| s.is_action())
            .map(|s| Ok((s.text.clone(), self.motion.slice(s.start_frame, s.end_frame)?)))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PairSource {
    Overlap,
    TransitionBridge,
}

/// Two temporally adjacent action motions; `motion_2` starts on the frame
/// right after `motion_1` ends in the source sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionPair {
    pub motion_1: Motion,
    pub text_1: String,
    pub motion_2: Motion,
    pub text_2: String,
    pub source: PairSource,
    /// Source frame ranges of the two members.
    pub span_1: (usize, usize),
    pub span_2: (usize, usize),
}

impl ActionPair {
    pub fn total_frames(&self) -> usize {
        self.motion_1.len() + self.motion_2.len()
    }

    pub fn duration_seconds(&self) -> f64 {
        self.motion_1.duration_seconds() + self.motion_2.duration_seconds()
    }

    pub fn concatenated(&self) -> Result<Motion, MotionError> {
        self.motion_1.concat(&self.motion_2)
    }
}

/// Pair membership found by [`pair_plan`], before any frames are cut.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlannedPair {
    pub first: usize,
    pub second: usize,
    pub span_1: (usize, usize),
    pub span_2: (usize, usize),
    pub source: PairSource,
}

fn plan_order(a: &PlannedPair, b: &PlannedPair) -> Ordering {
    (a.span_1.0, a.span_2.0, a.span_1.1, a.span_2.1, a.source, a.first, a.second).cmp(&(
        b.span_1.0,
        b.span_2.0,
        b.span_1.1,
        b.span_2.1,
        b.source,
        b.first,
        b.second,
    ))
}

/// Split point for two overlapping, non-nested segments: the shared frames
/// are divided evenly, the odd frame going to the first member.
pub fn overlap_split(first: &LabeledSegment, second: &LabeledSegment) -> usize {
    let lo = second.start_frame;
    let hi = first.end_frame;
    lo + (hi - lo).div_ceil(2)
}

/// Nearest action segments before and after a transition, among those that
/// overlap it. Predecessors start strictly before the transition; the one
/// with the latest start (then latest end) wins. Successors start at or
/// after it; earliest start (then earliest end) wins. Index breaks ties.
fn bridge_members(segments: &[LabeledSegment], t: &LabeledSegment) -> Option<(usize, usize)> {
    let mut pred: Option<usize> = None;
    let mut succ: Option<usize> = None;
    for (i, s) in segments.iter().enumerate() {
        if !s.is_action() || !s.overlaps(t) {
            continue;
        }
        if s.start_frame < t.start_frame {
            let better = match pred {
                None => true,
                Some(p) => {
                    let q = &segments[p];
                    (s.start_frame, s.end_frame) > (q.start_frame, q.end_frame)
                }
            };
            if better {
                pred = Some(i);
            }
        } else {
            let better = match succ {
                None => true,
                Some(p) => {
                    let q = &segments[p];
                    (s.start_frame, s.end_frame) < (q.start_frame, q.end_frame)
                }
            };
            if better {
                succ = Some(i);
            }
        }
    }
    let (a, b) = (pred?, succ?);
    // The second member must extend past the first.
    (segments[b].end_frame > segments[a].end_frame).then_some((a, b))
}

/// Which segment pairs form action pairs, and how their frames are split.
///
/// Overlap pairs: two action segments that intersect without either
/// containing the other (identical intervals contain each other and are
/// skipped). Transition pairs: the nearest action segments on either side of
/// a transition that overlaps both; the first member keeps its own frames
/// and every frame after it up to the end of the second member goes to the
/// second. A pair found both ways is reported once, as a transition pair.
pub fn pair_plan(segments: &[LabeledSegment]) -> Vec<PlannedPair> {
    let mut order: Vec<usize> = (0..segments.len()).filter(|&i| segments[i].is_action()).collect();
    order.sort_by_key(|&i| (segments[i].start_frame, segments[i].end_frame, i));

    let mut bridged: Vec<PlannedPair> = Vec::new();
    for t in segments.iter().filter(|s| s.is_transition) {
        if let Some((a, b)) = bridge_members(segments, t) {
            if !bridged.iter().any(|p| p.first == a && p.second == b) {
                let (sa, sb) = (&segments[a], &segments[b]);
                bridged.push(PlannedPair {
                    first: a,
                    second: b,
                    span_1: (sa.start_frame, sa.end_frame),
                    span_2: (sa.end_frame, sb.end_frame),
                    source: PairSource::TransitionBridge,
                });
            }
        }
    }

    let mut out = Vec::new();
    for (k, &a) in order.iter().enumerate() {
        let sa = &segments[a];
        for &b in &order[k + 1..] {
            let sb = &segments[b];
            if sb.start_frame >= sa.end_frame {
                break;
            }
            // Sorted by start, so sb starts at or after sa: non-nested means
            // a strictly later start and a strictly later end.
            if sb.start_frame == sa.start_frame || sb.end_frame <= sa.end_frame {
                continue;
            }
            if bridged.iter().any(|p| p.first == a && p.second == b) {
                continue;
            }
            let mid = overlap_split(sa, sb);
            out.push(PlannedPair {
                first: a,
                second: b,
                span_1: (sa.start_frame, mid),
                span_2: (mid, sb.end_frame),
                source: PairSource::Overlap,
            });
        }
    }
    out.extend(bridged);
    out.sort_by(plan_order);
    out
}

/// All action pairs of a record, ordered by the start of the first member
/// and then of the second.
pub fn extract_pairs(record: &SequenceRecord) -> Result<Vec<ActionPair>, DatasetError> {
    record.validate()?;
    pair_plan(&record.segments)
        .into_iter()
        .map(|p| {
            Ok(ActionPair {
                motion_1: record.motion.slice(p.span_1.0, p.span_1.1)?,
                text_1: record.segments[p.first].text.clone(),
                motion_2: record.motion.slice(p.span_2.0, p.span_2.1)?,
                text_2: record.segments[p.second].text.clone(),
                source: p.source,
                span_1: p.span_1,
                span_2: p.span_2,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::motion::Pose;
    use crate::skeleton::Skeleton;
    use std::sync::Arc;

    fn record(n: usize, segs: &[(&str, usize, usize)]) -> SequenceRecord {
        let sk = Arc::new(Skeleton::humanoid());
        let motion = Motion::new(vec![Pose::identity(22); n], 30.0, sk).unwrap();
        let segments = segs.iter().map(|(t, s, e)| LabeledSegment::new(*t, *s, *e).unwrap()).collect();
        SequenceRecord::new(motion, segments).unwrap()
    }

    #[test]
    fn single_segment_has_no_pairs() {
        assert!(extract_pairs(&record(100, &[("walk", 0, 100)])).unwrap().is_empty());
    }

    #[test]
    fn overlap_split_at_midpoint() {
        let pairs = extract_pairs(&record(150, &[("walk", 0, 100), ("sit", 80, 150)])).unwrap();
        assert_eq!(pairs.len(), 1);
        assert_eq!(pairs[0].span_1, (0, 90));
        assert_eq!(pairs[0].span_2, (90, 150));
        assert_eq!(pairs[0].motion_1.len(), 90);
        assert_eq!(pairs[0].motion_2.len(), 60);
        assert_eq!(pairs[0].source, PairSource::Overlap);
    }

    #[test]
    fn odd_overlap_gives_extra_frame_to_first() {
        let pairs = extract_pairs(&record(30, &[("a", 0, 15), ("b", 10, 30)])).unwrap();
        // overlap [10, 15): 5 frames, 3 to the first
        assert_eq!(pairs[0].span_1, (0, 13));
    }

    #[test]
    fn transition_bridge() {
        let pairs = extract_pairs(&record(
            200,
            &[("walk", 0, 100), ("transition", 95, 115), ("sit", 110, 200)],
        ))
        .unwrap();
        assert_eq!(pairs.len(), 1);
        assert_eq!(pairs[0].source, PairSource::TransitionBridge);
        assert_eq!(pairs[0].span_1, (0, 100));
        assert_eq!(pairs[0].span_2, (100, 200));
        assert_eq!(pairs[0].text_2, "sit");
    }

    #[test]
    fn nested_and_identical_segments_are_skipped() {
        let r = record(100, &[("a", 0, 100), ("b", 10, 50), ("c", 10, 50), ("T-Pose", 50, 70)]);
        assert!(extract_pairs(&r).unwrap().is_empty());
    }

    #[test]
    fn uncovered_frames_are_invalid() {
        let sk = Arc::new(Skeleton::humanoid());
        let motion = Motion::new(vec![Pose::identity(22); 10], 30.0, sk).unwrap();
        let segs = vec![LabeledSegment::new("a", 0, 5).unwrap(), LabeledSegment::new("b", 6, 10).unwrap()];
        assert!(matches!(SequenceRecord::new(motion, segs), Err(DatasetError::InvalidRecord(_))));
    }

    #[test]
    fn transition_label_detection() {
        assert!(LabeledSegment::new(" Transition ", 0, 1).unwrap().is_transition);
        assert!(!LabeledSegment::new("transition to sit", 0, 1).unwrap().is_transition);
        assert!(LabeledSegment::new("a-pose", 0, 1).unwrap().is_calibration_pose());
        assert!(LabeledSegment::new("x", 3, 3).is_err());
    }
}
