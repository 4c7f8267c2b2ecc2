mod common;

use std::sync::Arc;

use common::oracles::{oracle_pairs, random_layout, OraclePair};
use motion_compose::dataset::{
    extract_pairs, pair_plan, synth_generate, ActionSpec, LabeledSegment, PairSource, SequenceRecord,
};
use motion_compose::motion::{Motion, Pose};
use motion_compose::skeleton::Skeleton;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn still_motion(frames: usize) -> Motion {
    let skeleton = Arc::new(Skeleton::humanoid());
    let poses = (0..frames)
        .map(|f| {
            let mut p = Pose::identity(skeleton.num_joints());
            p.root_translation[0] = f as f64;
            p
        })
        .collect();
    Motion::new(poses, 30.0, skeleton).unwrap()
}

#[test]
fn thousand_random_layouts_match_the_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut bridged = 0;
    for _ in 0..1000 {
        let frames = rng.random_range(20..120);
        let segments = random_layout(&mut rng, frames);
        let oracle = oracle_pairs(&segments);
        bridged += oracle.iter().filter(|p| p.source == PairSource::TransitionBridge).count();
        let mut planned: Vec<OraclePair> = pair_plan(&segments)
            .into_iter()
            .map(|p| OraclePair { first: p.first, second: p.second, span_1: p.span_1, span_2: p.span_2, source: p.source })
            .collect();
        planned.sort();
        assert_eq!(planned, oracle, "layout {segments:?}");

        let record = SequenceRecord::new(still_motion(frames), segments.clone()).unwrap();
        let pairs = extract_pairs(&record).unwrap();
        assert_eq!(pairs.len(), oracle.len());
        for (p, o) in pairs.iter().zip(pair_plan(&segments)) {
            assert_eq!((p.span_1, p.span_2, p.source), (o.span_1, o.span_2, o.source));
            assert_eq!(p.text_1, segments[o.first].text);
            assert_eq!(p.text_2, segments[o.second].text);
            assert_eq!(p.motion_1.len(), p.span_1.1 - p.span_1.0);
            assert_eq!(p.motion_2.first().root_translation[0], p.span_2.0 as f64);
            assert!(p.text_1 != "transition" && p.text_2 != "transition");
        }
    }
    assert!(bridged > 50, "layouts exercised only {bridged} bridges");
}

#[test]
fn overlap_pairs_keep_every_frame_once() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..300 {
        let segments = random_layout(&mut rng, 80);
        for p in pair_plan(&segments).iter().filter(|p| p.source == PairSource::Overlap) {
            let (a, b) = (&segments[p.first], &segments[p.second]);
            assert_eq!(p.span_1.1, p.span_2.0);
            assert_eq!((p.span_1.1 - p.span_1.0) + (p.span_2.1 - p.span_2.0), b.end_frame - a.start_frame);
        }
    }
}

#[test]
fn odd_overlap_gives_the_extra_frame_to_the_first() {
    let segs = vec![LabeledSegment::new("walk", 0, 10).unwrap(), LabeledSegment::new("run", 7, 20).unwrap()];
    let plan = pair_plan(&segs);
    assert_eq!(plan.len(), 1);
    assert_eq!(plan[0].span_1, (0, 9));
    assert_eq!(plan[0].span_2, (9, 20));
}

#[test]
fn identical_and_nested_segments_do_not_pair() {
    let segs = vec![
        LabeledSegment::new("walk", 0, 10).unwrap(),
        LabeledSegment::new("run", 0, 10).unwrap(),
        LabeledSegment::new("wave", 2, 5).unwrap(),
    ];
    assert!(pair_plan(&segs).is_empty());
}

#[test]
fn transition_triple_is_one_pair() {
    let segs = vec![
        LabeledSegment::new("walk", 0, 10).unwrap(),
        LabeledSegment::new("transition", 8, 14).unwrap(),
        LabeledSegment::new("sit down", 12, 30).unwrap(),
    ];
    let plan = pair_plan(&segs);
    assert_eq!(plan.len(), 1);
    assert_eq!(plan[0].source, PairSource::TransitionBridge);
    assert_eq!(plan[0].span_1, (0, 10));
    assert_eq!(plan[0].span_2, (10, 30));
}

#[test]
fn synthesized_two_action_sequence_has_one_pair() {
    let spec = [ActionSpec::new("walk-forward", 2.0), ActionSpec::new("sit-down", 2.0)];
    let record = synth_generate(&spec, 7).unwrap();
    let pairs = extract_pairs(&record).unwrap();
    assert_eq!(pairs.len(), 1);
    assert_eq!(pairs.len(), oracle_pairs(&record.segments).len());
}
