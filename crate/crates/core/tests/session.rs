mod common;

use common::small_pairs;
use motion_compose::compose::{compose, CompositionRequest, StitchConfig, Strategy};
use motion_compose::model::{Model, ModelConfig, ModelKind, Prompt, Sampling};
use motion_compose::motion::MotionFile;
use motion_compose::runner::init_model;
use motion_compose::session::{Session, SessionError, SessionSnapshot};

fn setup(kind: ModelKind) -> (Model, Vec<String>) {
    let pairs = small_pairs(3, 0);
    let model = init_model(kind, ModelConfig::tiny(), &pairs, 5).unwrap();
    let mut texts: Vec<String> = pairs.iter().flat_map(|p| [p.text_1.clone(), p.text_2.clone()]).collect();
    texts.dedup();
    (model, texts)
}

#[test]
fn spans_are_contiguous_and_sized_by_duration() {
    let (model, texts) = setup(ModelKind::Teach);
    let mut s = Session::new("a", 9, 0, StitchConfig::default());
    let first = s.append(&model, Prompt::new(&texts[0], 2.0), None).unwrap();
    assert_eq!((first.span.start, first.span.end), (0, 60));
    assert_eq!(first.frames.len(), 60);
    s.append(&model, Prompt::new(&texts[1], 1.0), None).unwrap();
    s.append(&model, Prompt::new(&texts[2], 1.5), None).unwrap();
    let info = s.info();
    assert_eq!(info.spans.len(), 3);
    assert_eq!(info.spans[0].start, 0);
    for w in info.spans.windows(2) {
        assert_eq!(w[0].end, w[1].start);
    }
    assert_eq!(info.spans.last().unwrap().end, info.total_frames);
    assert_eq!(info.total_frames, 60 + 30 + 45);
}

#[test]
fn export_roundtrips_with_one_label_per_prompt() {
    let (model, texts) = setup(ModelKind::Teach);
    let mut s = Session::new("a", 1, 0, StitchConfig::default());
    assert!(matches!(s.export(), Err(SessionError::Empty)));
    assert!(matches!(s.positions(), Err(SessionError::Empty)));
    s.append(&model, Prompt::new(&texts[0], 1.0), None).unwrap();
    s.append(&model, Prompt::new(&texts[1], 1.0), None).unwrap();
    let file = s.export().unwrap();
    let back = MotionFile::from_json_bytes(&file.to_json_bytes()).unwrap();
    let (motion, labels) = back.into_motion().unwrap();
    let labels = labels.unwrap();
    assert_eq!(labels.len(), 2);
    assert_eq!(labels[1].text, texts[1]);
    assert_eq!(motion, s.state().motion.clone().unwrap());
    let pos = s.positions().unwrap();
    assert_eq!(pos.positions.len(), motion.len());
    assert_eq!(pos.parents.len(), motion.skeleton().num_joints());
}

#[test]
fn rejects_bad_prompts_without_changing_state() {
    let (model, texts) = setup(ModelKind::Teach);
    let mut s = Session::new("a", 1, 0, StitchConfig::default());
    s.append(&model, Prompt::new(&texts[0], 1.0), None).unwrap();
    let before = s.info();
    for p in [Prompt::new("  ", 1.0), Prompt::new(&texts[0], 0.0), Prompt::new(&texts[0], f64::NAN)] {
        assert!(matches!(s.append(&model, p, None), Err(SessionError::InvalidPrompt(_))));
    }
    assert_eq!(s.info(), before);
}

#[test]
fn idempotency_keys_replay_or_conflict() {
    let (model, texts) = setup(ModelKind::Teach);
    let mut s = Session::new("a", 1, 0, StitchConfig::default());
    let a = s.append(&model, Prompt::new(&texts[0], 1.0), Some("k1")).unwrap();
    let again = s.append(&model, Prompt::new(&texts[0], 1.0), Some("k1")).unwrap();
    assert_eq!(a, again);
    assert_eq!(s.info().prompts.len(), 1);
    let err = s.append(&model, Prompt::new(&texts[1], 1.0), Some("k1")).unwrap_err();
    assert!(matches!(err, SessionError::IdempotencyConflict(_)));
    assert!(err.is_client_error());
}

#[test]
fn joint_models_cannot_drive_sessions() {
    let (model, texts) = setup(ModelKind::Joint);
    let mut s = Session::new("a", 1, 0, StitchConfig::default());
    assert!(matches!(s.append(&model, Prompt::new(&texts[0], 1.0), None), Err(SessionError::ModelKind(_))));
}

#[test]
fn snapshot_restore_rebuilds_the_same_session() {
    let (model, texts) = setup(ModelKind::Teach);
    let mut s = Session::new("a", 42, 7, StitchConfig::default());
    for (i, t) in texts.iter().take(3).enumerate() {
        s.append(&model, Prompt::new(t, 1.0 + 0.5 * i as f64), Some(&format!("k{i}"))).unwrap();
    }
    let json = serde_json::to_vec(&s.snapshot()).unwrap();
    let snap: SessionSnapshot = serde_json::from_slice(&json).unwrap();
    let restored = Session::restore(&snap, &model).unwrap();
    assert_eq!(restored.info(), s.info());
    assert_eq!(restored.state(), s.state());
    assert_eq!(restored.export().unwrap().to_json_bytes(), s.export().unwrap().to_json_bytes());

    let mut broken = snap.clone();
    broken.idempotency.insert("late".into(), 9);
    assert!(Session::restore(&broken, &model).is_err());
}

#[test]
fn session_matches_batch_composition_with_the_same_seed() {
    for kind in [ModelKind::Teach, ModelKind::Independent] {
        let (model, texts) = setup(kind);
        let prompts: Vec<Prompt> = texts.iter().take(3).map(|t| Prompt::new(t, 1.2)).collect();
        let mut s = Session::new("a", 11, 0, StitchConfig::default());
        for p in &prompts {
            s.append(&model, p.clone(), None).unwrap();
        }
        let request = CompositionRequest {
            prompts,
            strategy: Strategy::for_kind(kind),
            stitch: StitchConfig::default(),
            sampling: Sampling::Stochastic(11),
        };
        let batch = compose(&request, &model).unwrap();
        assert_eq!(s.state().motion.as_ref().unwrap(), &batch.motion);
        assert_eq!(s.info().spans, batch.spans);
    }
}
