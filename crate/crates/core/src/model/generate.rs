use serde::{Deserialize, Serialize};

use super::{Model, ModelError, ModelKind, Sampling};
use crate::motion::{Motion, RigidYaw};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prompt {
    pub text: String,
    pub duration_s: f64,
}

impl Prompt {
    pub fn new(text: impl Into<String>, duration_s: f64) -> Self {
        Prompt { text: text.into(), duration_s }
    }
}

/// Generate the action following `previous` (world coordinates).
///
/// A TEACH model sees the previous action re-expressed in the canonical
/// frame of its own first frame, exactly as pairs are presented in
/// training; the new action is mapped back to world coordinates. Without a
/// predecessor, or for other model kinds, the action is generated in the
/// canonical frame.
pub fn next_action(
    model: &Model,
    previous: Option<&Motion>,
    prompt: &Prompt,
    sampling: Sampling,
) -> Result<Motion, ModelError> {
    if prompt.text.trim().is_empty() {
        return Err(crate::text::TextError::Empty.into());
    }
    let frames = model.frames_for(prompt.duration_s)?;
    match previous {
        Some(prev) if model.kind == ModelKind::Teach && model.config.past_frames > 0 => {
            let t = RigidYaw::canonicalizing(prev.first())?;
            let past = prev.transformed(&t)?;
            let m = model.generate(&prompt.text, frames, Some(&past), sampling)?;
            Ok(m.transformed(&t.inverse())?)
        }
        _ => model.generate(&prompt.text, frames, None, sampling),
    }
}

/// One unstitched motion per prompt; action `i` is sampled with
/// `sampling.child(i)` and conditioned on action `i - 1`.
pub fn generate_sequence(model: &Model, prompts: &[Prompt], sampling: Sampling) -> Result<Vec<Motion>, ModelError> {
    if prompts.is_empty() {
        return Err(ModelError::Config("no prompts".into()));
    }
    let mut out: Vec<Motion> = Vec::with_capacity(prompts.len());
    for (i, p) in prompts.iter().enumerate() {
        let m = next_action(model, out.last(), p, sampling.child(i as u64))?;
        out.push(m);
    }
    Ok(out)
}
