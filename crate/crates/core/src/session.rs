//! Interactive composition sessions: an ordered prompt history whose
//! accumulated motion is rebuilt action by action.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::compose::{ComposeError, CompositionState, Span, StitchConfig};
use crate::model::{Model, ModelError, ModelKind, Prompt, Sampling};
use crate::motion::{FrameLabel, MotionFile, Pose};

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("invalid prompt: {0}")]
    InvalidPrompt(String),
    #[error("idempotency key {0:?} was already used with a different prompt")]
    IdempotencyConflict(String),
    #[error("session has no actions yet")]
    Empty,
    #[error("sessions need a teach or independent model, got {0:?}")]
    ModelKind(ModelKind),
    #[error(transparent)]
    Compose(#[from] ComposeError),
}

impl SessionError {
    /// True when the caller sent something unacceptable, as opposed to a
    /// failure while generating.
    pub fn is_client_error(&self) -> bool {
        matches!(self, SessionError::InvalidPrompt(_) | SessionError::IdempotencyConflict(_) | SessionError::Empty)
    }
}

/// Body of a request creating a session; without a seed the server picks one.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CreateSessionRequest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreatedSession {
    pub id: String,
    pub rng_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppendRequest {
    pub text: String,
    pub duration_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub idempotency_key: Option<String>,
}

/// World joint positions of every frame, for clients that draw the motion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointPositions {
    pub fps: f64,
    pub parents: Vec<Option<usize>>,
    /// `positions[frame][joint]`
    pub positions: Vec<Vec<[f64; 3]>>,
}

/// JSON error body of the session service.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppendOutcome {
    pub span: Span,
    pub frames: Vec<Pose>,
}

/// Summary of a session without its frames.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionInfo {
    pub id: String,
    pub created_at_ms: u64,
    pub rng_seed: u64,
    pub prompts: Vec<Prompt>,
    pub spans: Vec<Span>,
    pub total_frames: usize,
}

/// What is needed to rebuild a session exactly: generation is deterministic
/// in the seed and prompt list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSnapshot {
    pub id: String,
    pub created_at_ms: u64,
    pub rng_seed: u64,
    pub stitch: StitchConfig,
    pub prompts: Vec<Prompt>,
    /// Idempotency key to the index of the action it created.
    pub idempotency: BTreeMap<String, usize>,
}

#[derive(Debug, Clone)]
pub struct Session {
    id: String,
    created_at_ms: u64,
    rng_seed: u64,
    stitch: StitchConfig,
    state: CompositionState,
    idempotency: BTreeMap<String, usize>,
}

fn check_model(model: &Model) -> Result<(), SessionError> {
    match model.kind {
        ModelKind::Teach | ModelKind::Independent => Ok(()),
        other => Err(SessionError::ModelKind(other)),
    }
}

fn check_prompt(prompt: &Prompt) -> Result<(), SessionError> {
    if prompt.text.trim().is_empty() {
        return Err(SessionError::InvalidPrompt("text is empty".into()));
    }
    if !(prompt.duration_s > 0.0) || !prompt.duration_s.is_finite() {
        return Err(SessionError::InvalidPrompt(format!("duration_s must be positive, got {}", prompt.duration_s)));
    }
    Ok(())
}

impl Session {
    pub fn new(id: impl Into<String>, rng_seed: u64, created_at_ms: u64, stitch: StitchConfig) -> Self {
        Session {
            id: id.into(),
            created_at_ms,
            rng_seed,
            stitch,
            state: CompositionState::new(),
            idempotency: BTreeMap::new(),
        }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn rng_seed(&self) -> u64 {
        self.rng_seed
    }

    pub fn state(&self) -> &CompositionState {
        &self.state
    }

    /// Sampling of the whole session; action `i` draws from its `child(i)`.
    pub fn sampling(&self) -> Sampling {
        Sampling::Stochastic(self.rng_seed)
    }

    /// Generate, align and stitch the next action. On any error the session
    /// is left unchanged. A repeated idempotency key with the same prompt
    /// returns the original result without generating again.
    pub fn append(
        &mut self,
        model: &Model,
        prompt: Prompt,
        idempotency_key: Option<&str>,
    ) -> Result<AppendOutcome, SessionError> {
        check_model(model)?;
        check_prompt(&prompt)?;
        if let Some(key) = idempotency_key {
            if let Some(&i) = self.idempotency.get(key) {
                if self.state.prompts[i] != prompt {
                    return Err(SessionError::IdempotencyConflict(key.to_string()));
                }
                return Ok(self.outcome(i));
            }
        }
        let (next, _) = self.state.append(model, prompt, self.stitch, self.sampling()).map_err(|e| match e {
            ComposeError::Model(ModelError::Text(t)) => SessionError::InvalidPrompt(t.to_string()),
            ComposeError::Model(ModelError::Duration(d)) => SessionError::InvalidPrompt(format!("duration {d}")),
            other => SessionError::Compose(other),
        })?;
        self.state = next;
        let i = self.state.len() - 1;
        if let Some(key) = idempotency_key {
            self.idempotency.insert(key.to_string(), i);
        }
        Ok(self.outcome(i))
    }

    /// The frames of action `i` as they stand in the accumulated motion.
    fn outcome(&self, i: usize) -> AppendOutcome {
        let span = self.state.spans[i];
        let motion = self.state.motion.as_ref().expect("appended");
        AppendOutcome { span, frames: motion.frames()[span.start..span.end].to_vec() }
    }

    pub fn info(&self) -> SessionInfo {
        SessionInfo {
            id: self.id.clone(),
            created_at_ms: self.created_at_ms,
            rng_seed: self.rng_seed,
            prompts: self.state.prompts.clone(),
            spans: self.state.spans.clone(),
            total_frames: self.state.motion.as_ref().map_or(0, |m| m.len()),
        }
    }

    /// Motion file of the accumulated motion with one label per prompt.
    pub fn export(&self) -> Result<MotionFile, SessionError> {
        let motion = self.state.motion.as_ref().ok_or(SessionError::Empty)?;
        let labels = self
            .state
            .prompts
            .iter()
            .zip(&self.state.spans)
            .map(|(p, s)| FrameLabel { text: p.text.clone(), start_frame: s.start, end_frame: s.end })
            .collect();
        Ok(motion.to_file(Some(labels)))
    }

    pub fn positions(&self) -> Result<JointPositions, SessionError> {
        let motion = self.state.motion.as_ref().ok_or(SessionError::Empty)?;
        let positions = motion
            .joint_positions()
            .map_err(|e| SessionError::Compose(e.into()))?
            .into_iter()
            .map(|frame| frame.into_iter().map(|p| [p.x, p.y, p.z]).collect())
            .collect();
        Ok(JointPositions { fps: motion.fps(), parents: motion.skeleton().joints().iter().map(|j| j.parent).collect(), positions })
    }

    pub fn snapshot(&self) -> SessionSnapshot {
        SessionSnapshot {
            id: self.id.clone(),
            created_at_ms: self.created_at_ms,
            rng_seed: self.rng_seed,
            stitch: self.stitch,
            prompts: self.state.prompts.clone(),
            idempotency: self.idempotency.clone(),
        }
    }

    /// Rebuild a session by replaying its prompts.
    pub fn restore(snapshot: &SessionSnapshot, model: &Model) -> Result<Session, SessionError> {
        let mut s = Session::new(snapshot.id.clone(), snapshot.rng_seed, snapshot.created_at_ms, snapshot.stitch);
        for p in &snapshot.prompts {
            s.append(model, p.clone(), None)?;
        }
        if let Some((k, _)) = snapshot.idempotency.iter().find(|(_, &i)| i >= snapshot.prompts.len()) {
            return Err(SessionError::InvalidPrompt(format!("snapshot key {k:?} points past the prompt list")));
        }
        s.idempotency = snapshot.idempotency.clone();
        Ok(s)
    }
}
