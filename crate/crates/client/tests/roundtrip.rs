use std::sync::Arc;

use motion_compose::compose::StitchConfig;
use motion_compose::dataset::{extract_pairs, synth_corpus, CorpusConfig};
use motion_compose::model::{ModelConfig, ModelKind};
use motion_compose::runner::init_model;
use motion_compose_client::{Client, ClientError};
use motion_compose_server::{serve_on, SessionStore};
use reqwest::StatusCode;
use tokio::net::TcpListener;
use tokio::sync::oneshot;

async fn start() -> (Client, Vec<String>, oneshot::Sender<()>, tokio::task::JoinHandle<anyhow::Result<()>>) {
    let records = synth_corpus(&CorpusConfig { sequences: 3, ..CorpusConfig::default() }).unwrap();
    let pairs: Vec<_> = records.iter().flat_map(|r| extract_pairs(r).unwrap()).collect();
    let texts = pairs.iter().flat_map(|p| [p.text_1.clone(), p.text_2.clone()]).collect();
    let model = Arc::new(init_model(ModelKind::Teach, ModelConfig::tiny(), &pairs, 1).unwrap());
    let store = Arc::new(SessionStore::open(model, StitchConfig::default(), None, 0).unwrap());
    let listener = TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    let (tx, rx) = oneshot::channel();
    let handle = tokio::spawn(serve_on(listener, store, async {
        let _ = rx.await;
    }));
    (Client::new(format!("http://{addr}/")), texts, tx, handle)
}

#[tokio::test]
async fn client_drives_a_session_over_tcp() {
    let (client, texts, stop, handle) = start().await;
    let s = client.create_session(Some(4)).await.unwrap();
    assert_eq!(s.rng_seed, 4);
    let a = client.append(&s.id, &texts[0], 1.0, Some("one")).await.unwrap();
    assert_eq!((a.span.start, a.span.end), (0, 30));
    let replay = client.append(&s.id, &texts[0], 1.0, Some("one")).await.unwrap();
    assert_eq!(a, replay);
    client.append(&s.id, &texts[1], 0.5, None).await.unwrap();

    let info = client.info(&s.id).await.unwrap();
    assert_eq!(info.prompts.len(), 2);
    assert_eq!(info.total_frames, 45);
    let (motion, labels) = client.motion(&s.id).await.unwrap().into_motion().unwrap();
    assert_eq!(motion.len(), 45);
    assert_eq!(labels.unwrap()[1].start_frame, 30);
    let pos = client.positions(&s.id).await.unwrap();
    assert_eq!(pos.positions.len(), 45);

    client.delete(&s.id).await.unwrap();
    let err = client.info(&s.id).await.unwrap_err();
    assert_eq!(err.status(), Some(StatusCode::NOT_FOUND));
    assert_eq!(err.code(), Some("unknown_session"));

    stop.send(()).unwrap();
    handle.await.unwrap().unwrap();
}

#[tokio::test]
async fn api_errors_carry_status_and_code() {
    let (client, texts, stop, handle) = start().await;
    let s = client.create_session(None).await.unwrap();
    let err = client.motion_bytes(&s.id).await.unwrap_err();
    assert_eq!((err.status(), err.code()), (Some(StatusCode::CONFLICT), Some("empty_session")));
    let err = client.append(&s.id, " ", 1.0, None).await.unwrap_err();
    assert_eq!((err.status(), err.code()), (Some(StatusCode::UNPROCESSABLE_ENTITY), Some("invalid_prompt")));
    client.append(&s.id, &texts[0], 1.0, Some("k")).await.unwrap();
    let err = client.append(&s.id, &texts[1], 1.0, Some("k")).await.unwrap_err();
    assert!(matches!(err, ClientError::Api { status: StatusCode::CONFLICT, .. }));
    stop.send(()).unwrap();
    handle.await.unwrap().unwrap();
}

#[tokio::test]
async fn unreachable_server_is_a_transport_error() {
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    drop(listener);
    let err = Client::new(format!("http://{addr}")).create_session(None).await.unwrap_err();
    assert!(matches!(err, ClientError::Transport(_)));
    assert_eq!(err.status(), None);
}
