use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use motion_compose::compose::StitchConfig;
use motion_compose::io::write_atomic;
use motion_compose::model::{Model, Prompt};
use motion_compose::rng::derive_seed;
use motion_compose::session::{AppendOutcome, JointPositions, Session, SessionInfo, SessionSnapshot};
use tokio::sync::Mutex;

use crate::ApiError;

struct Slot {
    session: Session,
    deleted: bool,
}

/// Live sessions sharing one read-only model. Each session has its own
/// lock, so appends to different sessions run concurrently while appends to
/// one session are serialized.
pub struct SessionStore {
    model: Arc<Model>,
    stitch: StitchConfig,
    dir: Option<PathBuf>,
    base_seed: u64,
    counter: AtomicU64,
    sessions: RwLock<HashMap<String, Arc<Mutex<Slot>>>>,
}

fn now_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis() as u64)
}

fn snapshot_path(dir: &Path, id: &str) -> PathBuf {
    dir.join(format!("{id}.json"))
}

fn persist(dir: &Path, snapshot: &SessionSnapshot) -> Result<(), ApiError> {
    let bytes = serde_json::to_vec_pretty(snapshot).map_err(|e| ApiError::Internal(e.to_string()))?;
    write_atomic(&snapshot_path(dir, &snapshot.id), &bytes).map_err(|e| ApiError::Internal(e.to_string()))
}

impl SessionStore {
    /// A store over `model`. With a directory, sessions are saved there after
    /// every change and the ones already saved are replayed now.
    pub fn open(
        model: Arc<Model>,
        stitch: StitchConfig,
        dir: Option<PathBuf>,
        base_seed: u64,
    ) -> anyhow::Result<SessionStore> {
        let mut sessions = HashMap::new();
        if let Some(dir) = &dir {
            std::fs::create_dir_all(dir)?;
            for entry in std::fs::read_dir(dir)? {
                let path = entry?.path();
                if path.extension().is_none_or(|e| e != "json") {
                    continue;
                }
                let restored = std::fs::read(&path)
                    .map_err(anyhow::Error::from)
                    .and_then(|b| Ok(serde_json::from_slice::<SessionSnapshot>(&b)?))
                    .and_then(|snap| Ok(Session::restore(&snap, &model)?));
                match restored {
                    Ok(s) => {
                        sessions.insert(s.id().to_string(), Arc::new(Mutex::new(Slot { session: s, deleted: false })));
                    }
                    Err(e) => tracing::warn!("skipping saved session {}: {e:#}", path.display()),
                }
            }
            tracing::info!("restored {} sessions from {}", sessions.len(), dir.display());
        }
        Ok(SessionStore {
            model,
            stitch,
            dir,
            base_seed,
            counter: AtomicU64::new(0),
            sessions: RwLock::new(sessions),
        })
    }

    pub fn model(&self) -> &Arc<Model> {
        &self.model
    }

    pub fn len(&self) -> usize {
        self.sessions.read().expect("session map lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn slot(&self, id: &str) -> Result<Arc<Mutex<Slot>>, ApiError> {
        let map = self.sessions.read().expect("session map lock");
        map.get(id).cloned().ok_or_else(|| ApiError::NotFound(id.to_string()))
    }

    pub async fn create(&self, seed: Option<u64>) -> Result<SessionInfo, ApiError> {
        let rng_seed =
            seed.unwrap_or_else(|| derive_seed(self.base_seed, &[self.counter.fetch_add(1, Ordering::Relaxed)]));
        let id = uuid::Uuid::new_v4().simple().to_string();
        let session = Session::new(id.clone(), rng_seed, now_ms(), self.stitch);
        if let Some(dir) = self.dir.clone() {
            let snap = session.snapshot();
            tokio::task::spawn_blocking(move || persist(&dir, &snap)).await.map_err(ApiError::join)??;
        }
        let info = session.info();
        self.sessions
            .write()
            .expect("session map lock")
            .insert(id, Arc::new(Mutex::new(Slot { session, deleted: false })));
        Ok(info)
    }

    /// Generate the next action of a session. The session is replaced only
    /// once generation (and saving, if enabled) succeeded.
    pub async fn append(&self, id: &str, prompt: Prompt, key: Option<String>) -> Result<AppendOutcome, ApiError> {
        let mut slot = self.slot(id)?.lock_owned().await;
        if slot.deleted {
            return Err(ApiError::NotFound(id.to_string()));
        }
        let model = self.model.clone();
        let dir = self.dir.clone();
        tokio::task::spawn_blocking(move || {
            let mut next = slot.session.clone();
            let out = next.append(&model, prompt, key.as_deref())?;
            if let Some(dir) = dir {
                persist(&dir, &next.snapshot())?;
            }
            slot.session = next;
            Ok(out)
        })
        .await
        .map_err(ApiError::join)?
    }

    pub async fn info(&self, id: &str) -> Result<SessionInfo, ApiError> {
        let slot = self.slot(id)?;
        let slot = slot.lock().await;
        if slot.deleted {
            return Err(ApiError::NotFound(id.to_string()));
        }
        Ok(slot.session.info())
    }

    /// Motion file bytes of the accumulated motion.
    pub async fn export(&self, id: &str) -> Result<Vec<u8>, ApiError> {
        let slot = self.slot(id)?;
        let slot = slot.lock().await;
        if slot.deleted {
            return Err(ApiError::NotFound(id.to_string()));
        }
        Ok(slot.session.export()?.to_json_bytes())
    }

    pub async fn positions(&self, id: &str) -> Result<JointPositions, ApiError> {
        let slot = self.slot(id)?;
        let slot = slot.lock().await;
        if slot.deleted {
            return Err(ApiError::NotFound(id.to_string()));
        }
        Ok(slot.session.positions()?)
    }

    pub async fn delete(&self, id: &str) -> Result<(), ApiError> {
        let slot = self
            .sessions
            .write()
            .expect("session map lock")
            .remove(id)
            .ok_or_else(|| ApiError::NotFound(id.to_string()))?;
        let mut slot = slot.lock().await;
        slot.deleted = true;
        if let Some(dir) = &self.dir {
            match std::fs::remove_file(snapshot_path(dir, id)) {
                Ok(()) => {}
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
                Err(e) => return Err(ApiError::Internal(e.to_string())),
            }
        }
        Ok(())
    }
}
