use std::path::Path;
use std::sync::Arc;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{Model, ModelConfig, ModelError, ModelKind, Trainer};
use crate::features::FeatureStats;
use crate::io::write_atomic;
use crate::nn::{AdamW, AdamWConfig, Tensor};
use crate::skeleton::Skeleton;
use crate::text::Vocabulary;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct StoredTensor {
    name: String,
    shape: [usize; 2],
    /// Little-endian f64 values, row-major, base64.
    data: String,
}

impl StoredTensor {
    fn new(name: &str, t: &Tensor) -> Self {
        let bytes: Vec<u8> = t.iter().flat_map(|v| v.to_le_bytes()).collect();
        StoredTensor { name: name.to_string(), shape: [t.nrows(), t.ncols()], data: B64.encode(bytes) }
    }

    fn tensor(&self) -> Result<Tensor, ModelError> {
        let bad = |m: &str| ModelError::Checkpoint(format!("tensor {}: {m}", self.name));
        let bytes = B64.decode(&self.data).map_err(|_| bad("bad base64"))?;
        if bytes.len() != self.shape[0] * self.shape[1] * 8 {
            return Err(bad("size does not match shape"));
        }
        let vals = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        Array2::from_shape_vec((self.shape[0], self.shape[1]), vals).map_err(|_| bad("bad shape"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct OptimizerState {
    config: AdamWConfig,
    step: u64,
    m: Vec<StoredTensor>,
    v: Vec<StoredTensor>,
}

/// Self-describing snapshot of a model and, optionally, its optimizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub kind: ModelKind,
    pub config: ModelConfig,
    pub fps: f64,
    pub skeleton: Skeleton,
    pub vocabulary: Vec<String>,
    pub vocabulary_hash: String,
    pub stats: FeatureStats,
    /// Epochs completed when the snapshot was taken.
    pub epoch: u64,
    pub train_seed: u64,
    pub val_ape: Option<f64>,
    params: Vec<StoredTensor>,
    optimizer: Option<OptimizerState>,
}

impl Checkpoint {
    pub fn from_model(model: &Model) -> Self {
        let params = model.store.ids().map(|id| StoredTensor::new(model.store.name(id), model.store.get(id))).collect();
        Checkpoint {
            version: CHECKPOINT_VERSION,
            kind: model.kind,
            config: model.config.clone(),
            fps: model.fps,
            skeleton: (*model.skeleton).clone(),
            vocabulary: model.vocab.tokens().to_vec(),
            vocabulary_hash: model.vocab.hash(),
            stats: model.stats.clone(),
            epoch: 0,
            train_seed: 0,
            val_ape: None,
            params,
            optimizer: None,
        }
    }

    pub fn from_trainer(trainer: &Trainer, epoch: u64) -> Self {
        let store = &trainer.model.store;
        let named = |ts: &[Tensor]| {
            store.ids().zip(ts).map(|(id, t)| StoredTensor::new(store.name(id), t)).collect::<Vec<_>>()
        };
        Checkpoint {
            epoch,
            train_seed: trainer.seed,
            optimizer: Some(OptimizerState {
                config: trainer.opt.config,
                step: trainer.opt.step,
                m: named(&trainer.opt.m),
                v: named(&trainer.opt.v),
            }),
            ..Checkpoint::from_model(&trainer.model)
        }
    }

    pub fn has_optimizer(&self) -> bool {
        self.optimizer.is_some()
    }

    pub fn to_json(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("checkpoint serializes")
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self, ModelError> {
        let c: Checkpoint = serde_json::from_slice(bytes).map_err(|e| ModelError::Checkpoint(e.to_string()))?;
        if c.version != CHECKPOINT_VERSION {
            return Err(ModelError::Checkpoint(format!("unsupported version {}", c.version)));
        }
        Ok(c)
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        write_atomic(path, &self.to_json()).map_err(|e| ModelError::Checkpoint(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let bytes = std::fs::read(path).map_err(|e| ModelError::Checkpoint(format!("{}: {e}", path.display())))?;
        Self::from_json(&bytes).map_err(|e| ModelError::Checkpoint(format!("{}: {e}", path.display())))
    }

    pub fn to_model(&self) -> Result<Model, ModelError> {
        let vocab = Vocabulary::from_tokens(self.vocabulary.clone())?;
        if vocab.hash() != self.vocabulary_hash {
            return Err(ModelError::Checkpoint("vocabulary hash mismatch".into()));
        }
        let mut model = Model::new(
            self.kind,
            self.config.clone(),
            vocab,
            self.stats.clone(),
            Arc::new(self.skeleton.clone()),
            self.fps,
            0,
        )?;
        let values = self.restore(&model, &self.params)?;
        for (id, v) in model.store.ids().collect::<Vec<_>>().into_iter().zip(values) {
            *model.store.get_mut(id) = v;
        }
        Ok(model)
    }

    pub fn to_trainer(&self) -> Result<Trainer, ModelError> {
        let model = self.to_model()?;
        let opt_state = self.optimizer.as_ref().ok_or_else(|| ModelError::Checkpoint("no optimizer state".into()))?;
        let m = self.restore(&model, &opt_state.m)?;
        let v = self.restore(&model, &opt_state.v)?;
        let opt = AdamW { config: opt_state.config, step: opt_state.step, m, v };
        Ok(Trainer { model, opt, seed: self.train_seed })
    }

    /// Tensors in store order, checked against names and shapes.
    fn restore(&self, model: &Model, stored: &[StoredTensor]) -> Result<Vec<Tensor>, ModelError> {
        if stored.len() != model.store.len() {
            return Err(ModelError::Checkpoint(format!(
                "{} tensors stored, model has {}",
                stored.len(),
                model.store.len()
            )));
        }
        model
            .store
            .ids()
            .zip(stored)
            .map(|(id, s)| {
                if s.name != model.store.name(id) {
                    return Err(ModelError::Checkpoint(format!("expected {}, found {}", model.store.name(id), s.name)));
                }
                let t = s.tensor()?;
                if t.dim() != model.store.get(id).dim() {
                    return Err(ModelError::Checkpoint(format!("tensor {} has wrong shape", s.name)));
                }
                Ok(t)
            })
            .collect()
    }
}
