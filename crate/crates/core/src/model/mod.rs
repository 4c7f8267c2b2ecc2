//! Text-conditioned motion VAE with past-motion conditioning.

mod checkpoint;
mod generate;
pub mod loss;
mod network;
mod train;

use std::sync::Arc;

use ndarray::{s, Array2};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{feature_dim, features_to_motion, motion_features, FeatureError, FeatureStats};
use crate::motion::{Motion, MotionError};
use crate::nn::{Graph, ParamStore, Tensor};
use crate::rng::stream;
use crate::rotation::{orthonormalize_6d, RotationError};
use crate::skeleton::Skeleton;
use crate::text::{TextError, Vocabulary};

pub use checkpoint::{Checkpoint, CHECKPOINT_VERSION};
pub use generate::{generate_sequence, next_action, Prompt};
pub use loss::{LossError, LossReport};
pub use network::{Dist, Network};
pub use train::{
    canonical_views, evaluate_item, item_loss, prepare_items, training_stats, LossRecord, LossVars, TrainItem, Trainer,
};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    Config(String),
    #[error(transparent)]
    Text(#[from] TextError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Motion(#[from] MotionError),
    #[error(transparent)]
    Rotation(#[from] RotationError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error("non-finite loss at step {step}: {report:?}")]
    NonFinite { step: u64, report: LossReport },
    #[error("invalid duration {0} s")]
    Duration(f64),
    #[error("empty batch")]
    EmptyBatch,
    #[error("item does not match model kind {0:?}")]
    ItemKind(ModelKind),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

/// Which composition strategy a network is trained for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    /// Pairs, two passes, second action conditioned on the first's tail.
    Teach,
    /// Single actions canonicalized on their own, never conditioned.
    Independent,
    /// Pairs merged into one motion with comma-joined text.
    Joint,
}

impl std::str::FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_lowercase().as_str() {
            "teach" => Ok(ModelKind::Teach),
            "independent" => Ok(ModelKind::Independent),
            "joint" => Ok(ModelKind::Joint),
            other => Err(format!("unknown model kind {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub layers: usize,
    pub heads: usize,
    pub dropout: f64,
    pub feedforward: usize,
    /// Width of every token feature and of the latent vector.
    pub latent_dim: usize,
    pub past_frames: usize,
    pub lambda_kl: f64,
    /// Weight of the L1 distance between text and motion latents.
    #[serde(default = "default_lambda_latent")]
    pub lambda_latent: f64,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    /// Condition the second pass on ground-truth instead of generated frames.
    #[serde(default)]
    pub gt_past: bool,
    #[serde(default)]
    pub frozen_text: bool,
}

fn default_lambda_latent() -> f64 {
    1e-5
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            layers: 6,
            heads: 4,
            dropout: 0.1,
            feedforward: 1024,
            latent_dim: 256,
            past_frames: 5,
            lambda_kl: 1e-5,
            lambda_latent: default_lambda_latent(),
            learning_rate: 1e-4,
            weight_decay: 1e-4,
            batch_size: 32,
            gt_past: false,
            frozen_text: false,
        }
    }
}

impl ModelConfig {
    /// Small network that trains on a laptop CPU in minutes.
    pub fn desk() -> Self {
        ModelConfig {
            layers: 2,
            heads: 4,
            feedforward: 128,
            latent_dim: 64,
            learning_rate: 1e-3,
            batch_size: 16,
            ..Self::default()
        }
    }

    /// Smallest configuration, used for gradient checks and overfitting.
    pub fn tiny() -> Self {
        ModelConfig {
            layers: 2,
            heads: 2,
            feedforward: 64,
            latent_dim: 32,
            dropout: 0.0,
            learning_rate: 1e-3,
            batch_size: 8,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: String| Err(ModelError::Config(m));
        if self.layers == 0 || self.heads == 0 || self.latent_dim == 0 || self.feedforward == 0 {
            return bad("layers, heads, latent_dim and feedforward must be positive".into());
        }
        if self.latent_dim % self.heads != 0 {
            return bad(format!("latent_dim {} not divisible by {} heads", self.latent_dim, self.heads));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        if !(self.learning_rate > 0.0) || self.lambda_kl < 0.0 || self.lambda_latent < 0.0 || self.weight_decay < 0.0 {
            return bad("learning_rate must be positive, lambda_kl, lambda_latent and weight_decay non-negative".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        Ok(())
    }
}

/// How a latent vector is drawn from its distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "mode", content = "seed")]
pub enum Sampling {
    /// `z = mu`
    Deterministic,
    /// `z = mu + sigma * eps` with `eps` from a stream seeded by the value.
    Stochastic(u64),
}

impl Sampling {
    /// Independent sampling mode for the `i`-th of several generations.
    pub fn child(self, i: u64) -> Sampling {
        match self {
            Sampling::Deterministic => Sampling::Deterministic,
            Sampling::Stochastic(seed) => Sampling::Stochastic(crate::rng::derive_seed(seed, &[i])),
        }
    }

    pub fn noise(self, dim: usize) -> Option<Tensor> {
        match self {
            Sampling::Deterministic => None,
            Sampling::Stochastic(seed) => {
                let mut rng = stream(seed, &[0x2a]);
                Some(Array2::from_shape_simple_fn((1, dim), || StandardNormal.sample(&mut rng)))
            }
        }
    }
}

/// Trained network plus everything needed to turn text into motion.
#[derive(Debug, Clone)]
pub struct Model {
    pub kind: ModelKind,
    pub config: ModelConfig,
    pub vocab: Vocabulary,
    pub stats: FeatureStats,
    pub skeleton: Arc<Skeleton>,
    pub fps: f64,
    pub store: ParamStore,
    pub net: Network,
}

impl Model {
    pub fn new(
        kind: ModelKind,
        config: ModelConfig,
        vocab: Vocabulary,
        stats: FeatureStats,
        skeleton: Arc<Skeleton>,
        fps: f64,
        init_seed: u64,
    ) -> Result<Self, ModelError> {
        config.validate()?;
        let d = feature_dim(skeleton.num_joints());
        if stats.dim() != d {
            return Err(FeatureError::Dim { expected: d, got: stats.dim() }.into());
        }
        if !(fps > 0.0) {
            return Err(ModelError::Config(format!("fps {fps}")));
        }
        let mut store = ParamStore::new();
        let mut rng = stream(init_seed, &[0x1217]);
        let net = Network::new(&mut store, &config, d, vocab.len(), &mut rng);
        Ok(Model { kind, config, vocab, stats, skeleton, fps, store, net })
    }

    pub fn feature_dim(&self) -> usize {
        feature_dim(self.skeleton.num_joints())
    }

    pub fn frames_for(&self, duration_s: f64) -> Result<usize, ModelError> {
        let n = (duration_s * self.fps).round();
        if !(duration_s > 0.0) || !n.is_finite() || n < 1.0 {
            return Err(ModelError::Duration(duration_s));
        }
        Ok(n as usize)
    }

    /// Standardized features of a motion.
    pub fn normalize(&self, motion: &Motion) -> Result<Tensor, ModelError> {
        Ok(self.stats.apply(&motion_features(motion))?)
    }

    /// Motion from standardized features, with rotations re-orthonormalized.
    pub fn denormalize(&self, feats: &Tensor) -> Result<Motion, ModelError> {
        let raw = self.stats.invert(feats)?;
        let motion = features_to_motion(&raw, self.fps, self.skeleton.clone())?;
        let frames = motion
            .into_frames()
            .into_iter()
            .map(|mut p| {
                for r in p.rot6d.iter_mut() {
                    *r = orthonormalize_6d(r)?;
                }
                Ok(p)
            })
            .collect::<Result<Vec<_>, RotationError>>()?;
        Ok(Motion::new(frames, self.fps, self.skeleton.clone())?)
    }

    /// Generate `frames` frames for `text` in the canonical frame of `past`
    /// (if any). Only the last `past_frames` rows of `past` are used, and
    /// only by a TEACH model.
    pub fn generate_features(
        &self,
        text: &str,
        frames: usize,
        past: Option<&Tensor>,
        sampling: Sampling,
    ) -> Result<Tensor, ModelError> {
        if frames == 0 {
            return Err(ModelError::Duration(0.0));
        }
        let tokens = self.vocab.encode(text)?;
        let mut g = Graph::new(&self.store);
        let t = self.net.encode_text(&mut g, &tokens);
        let p = self.config.past_frames;
        let past_var = match past {
            Some(h) if self.kind == ModelKind::Teach && p > 0 && h.nrows() > 0 => {
                let n = h.nrows();
                let tail = h.slice(s![n.saturating_sub(p).., ..]).to_owned();
                let v = g.input(tail);
                self.net.past_encode(&mut g, v)
            }
            _ => None,
        };
        let dist = self.net.encode_distribution(&mut g, t, past_var);
        let z = self.net.sample(&mut g, &dist, sampling.noise(self.config.latent_dim));
        let out = self.net.decode(&mut g, z, frames);
        Ok(g.value(out).clone())
    }

    /// Canonical-frame motion for `text`, optionally continuing `past`
    /// (already expressed in the same canonical frame).
    pub fn generate(
        &self,
        text: &str,
        frames: usize,
        past: Option<&Motion>,
        sampling: Sampling,
    ) -> Result<Motion, ModelError> {
        let past_feats = match past {
            Some(m) if self.kind == ModelKind::Teach && self.config.past_frames > 0 => {
                let p = self.config.past_frames.min(m.len());
                Some(self.normalize(&m.slice(m.len() - p, m.len())?)?)
            }
            _ => None,
        };
        let feats = self.generate_features(text, frames, past_feats.as_ref(), sampling)?;
        self.denormalize(&feats)
    }
}
