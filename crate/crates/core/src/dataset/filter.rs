use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ActionPair, DatasetError, LabeledSegment, SequenceRecord};
use crate::motion::Motion;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterConfig {
    pub target_fps: f64,
    pub min_duration_s: f64,
    pub max_duration_pair_s: f64,
    pub max_duration_single_s: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig { target_fps: 30.0, min_duration_s: 0.3, max_duration_pair_s: 25.0, max_duration_single_s: 5.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SegmentKind {
    Single,
    Pair,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Rejection {
    TooShort { seconds: f64 },
    TooLong { seconds: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Filtered<T> {
    Kept(T),
    Rejected(Rejection),
}

impl<T> Filtered<T> {
    pub fn kept(self) -> Option<T> {
        match self {
            Filtered::Kept(t) => Some(t),
            Filtered::Rejected(_) => None,
        }
    }
}

fn stride(from: f64, to: f64) -> Result<usize, DatasetError> {
    let ratio = from / to;
    let s = ratio.round();
    if !(to > 0.0) || s < 1.0 || (ratio - s).abs() > 1e-6 {
        return Err(DatasetError::Fps { from, to });
    }
    Ok(s as usize)
}

/// Keep every `fps / target_fps`-th frame.
pub fn resample(motion: &Motion, target_fps: f64) -> Result<Motion, DatasetError> {
    let step = stride(motion.fps(), target_fps)?;
    if step == 1 {
        return Ok(motion.clone());
    }
    let frames = motion.frames().iter().step_by(step).cloned().collect();
    Ok(Motion::new(frames, target_fps, motion.skeleton().clone())?)
}

impl SequenceRecord {
    /// Subsample the motion and remap segment boundaries onto kept frames.
    pub fn resample(&self, target_fps: f64) -> Result<SequenceRecord, DatasetError> {
        let step = stride(self.motion.fps(), target_fps)?;
        let motion = resample(&self.motion, target_fps)?;
        let n = motion.len();
        let segments = self
            .segments
            .iter()
            .filter_map(|s| {
                let start = s.start_frame.div_ceil(step);
                let end = s.end_frame.div_ceil(step).min(n);
                (start < end).then(|| LabeledSegment { start_frame: start, end_frame: end, ..s.clone() })
            })
            .collect();
        SequenceRecord::new(motion, segments)
    }
}

/// Uniformly random window of `len` frames, driven by `seed`.
pub fn crop_window(motion: &Motion, len: usize, seed: u64) -> Result<Motion, DatasetError> {
    if motion.len() <= len {
        return Ok(motion.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = rng.random_range(0..=motion.len() - len);
    Ok(motion.slice(start, start + len)?)
}

/// Subsample to the target rate, then apply the duration rules: anything
/// shorter than the minimum is rejected, pairs above the pair maximum are
/// rejected, and singles above the single maximum are cropped to a seeded
/// random window of that length.
pub fn filter_and_resample(
    motion: &Motion,
    kind: SegmentKind,
    config: &FilterConfig,
    crop_seed: u64,
) -> Result<Filtered<Motion>, DatasetError> {
    let m = resample(motion, config.target_fps)?;
    let secs = m.duration_seconds();
    if secs < config.min_duration_s {
        return Ok(Filtered::Rejected(Rejection::TooShort { seconds: secs }));
    }
    match kind {
        SegmentKind::Pair if secs > config.max_duration_pair_s => {
            Ok(Filtered::Rejected(Rejection::TooLong { seconds: secs }))
        }
        SegmentKind::Single if secs > config.max_duration_single_s => {
            let len = (config.max_duration_single_s * config.target_fps).round() as usize;
            Ok(Filtered::Kept(crop_window(&m, len, crop_seed)?))
        }
        _ => Ok(Filtered::Kept(m)),
    }
}

/// Duration rule for already-resampled pairs.
pub fn filter_pair(pair: ActionPair, config: &FilterConfig) -> Filtered<ActionPair> {
    let secs = pair.duration_seconds();
    if secs < config.min_duration_s {
        Filtered::Rejected(Rejection::TooShort { seconds: secs })
    } else if secs > config.max_duration_pair_s {
        Filtered::Rejected(Rejection::TooLong { seconds: secs })
    } else {
        Filtered::Kept(pair)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::motion::Pose;
    use crate::skeleton::Skeleton;
    use std::sync::Arc;

    fn counting(n: usize, fps: f64) -> Motion {
        let sk = Arc::new(Skeleton::humanoid());
        let frames = (0..n)
            .map(|i| Pose { root_translation: [i as f64, 0.0, 0.0], ..Pose::identity(22) })
            .collect();
        Motion::new(frames, fps, sk).unwrap()
    }

    #[test]
    fn subsamples_every_second_frame() {
        let out = filter_and_resample(&counting(120, 60.0), SegmentKind::Single, &FilterConfig::default(), 0)
            .unwrap()
            .kept()
            .unwrap();
        assert_eq!(out.len(), 60);
        assert_eq!(out.fps(), 30.0);
        assert_eq!(out.frames()[3].root_translation[0], 6.0);
    }

    #[test]
    fn short_single_rejected() {
        let r = filter_and_resample(&counting(8, 30.0), SegmentKind::Single, &FilterConfig::default(), 0).unwrap();
        assert!(matches!(r, Filtered::Rejected(Rejection::TooShort { .. })));
    }

    #[test]
    fn long_single_cropped_deterministically() {
        let cfg = FilterConfig::default();
        let a = filter_and_resample(&counting(300, 30.0), SegmentKind::Single, &cfg, 11).unwrap().kept().unwrap();
        let b = filter_and_resample(&counting(300, 30.0), SegmentKind::Single, &cfg, 11).unwrap().kept().unwrap();
        assert_eq!(a.len(), 150);
        assert_eq!(a, b);
        let first = a.frames()[0].root_translation[0];
        assert_eq!(a.frames()[149].root_translation[0], first + 149.0);
    }

    #[test]
    fn long_pair_rejected_not_cropped() {
        let cfg = FilterConfig::default();
        let r = filter_and_resample(&counting(900, 30.0), SegmentKind::Pair, &cfg, 0).unwrap();
        assert!(matches!(r, Filtered::Rejected(Rejection::TooLong { .. })));
        let ok = filter_and_resample(&counting(300, 30.0), SegmentKind::Pair, &cfg, 0).unwrap();
        assert_eq!(ok.kept().unwrap().len(), 300);
    }

    #[test]
    fn non_integer_stride_is_an_error() {
        assert!(matches!(resample(&counting(10, 50.0), 30.0), Err(DatasetError::Fps { .. })));
    }

    #[test]
    fn record_resample_keeps_coverage() {
        let m = counting(121, 60.0);
        let segs = vec![LabeledSegment::new("a", 0, 61).unwrap(), LabeledSegment::new("b", 55, 121).unwrap()];
        let r = SequenceRecord::new(m, segs).unwrap().resample(30.0).unwrap();
        assert_eq!(r.motion.len(), 61);
        assert_eq!(r.segments[0].end_frame, 31);
        assert_eq!(r.segments[1].start_frame, 28);
    }
}
