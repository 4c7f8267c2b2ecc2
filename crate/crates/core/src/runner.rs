//! Training runs on a corpus manifest: checkpoints, resumption, loss logs,
//! validation and the past-frame ablation.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::compose::{StitchConfig, Strategy};
use crate::dataset::{
    extract_pairs, filter_pair, synth_corpus, ActionPair, CorpusConfig, CorpusManifest, DatasetError, FilterConfig,
    ManifestEntry, SequenceRecord, Split,
};
use crate::io::write_atomic;
use crate::metrics::{evaluate, MetricError, MetricReport};
use crate::model::{
    prepare_items, training_stats, Checkpoint, LossRecord, LossReport, Model, ModelConfig, ModelError, ModelKind,
    Trainer,
};
use crate::motion::MotionError;
use crate::text::Vocabulary;

pub const LAST_CHECKPOINT: &str = "last.ckpt.json";
pub const BEST_CHECKPOINT: &str = "best.ckpt.json";
pub const LOSS_CSV: &str = "loss.csv";
pub const ABLATION_CSV: &str = "ablation.csv";

#[derive(Debug, Error)]
pub enum RunError {
    #[error("{0}")]
    Config(String),
    #[error("cannot resume from {path}: {reason}")]
    Resume { path: PathBuf, reason: String },
    #[error("no training pairs in the manifest")]
    NoPairs,
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Motion(#[from] MotionError),
}

fn default_every() -> u64 {
    1
}

fn default_grid() -> Vec<usize> {
    vec![1, 5, 10, 15]
}

fn default_val_limit() -> Option<usize> {
    Some(64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub kind: ModelKind,
    pub model: ModelConfig,
    pub manifest: PathBuf,
    pub epochs: u64,
    pub checkpoint_dir: PathBuf,
    #[serde(default = "default_every")]
    pub checkpoint_every: u64,
    #[serde(default)]
    pub train_seed: u64,
    #[serde(default)]
    pub init_seed: u64,
    #[serde(default)]
    pub eval_seed: u64,
    /// Validation pairs scored after each checkpoint; `None` for all.
    #[serde(default = "default_val_limit")]
    pub val_limit: Option<usize>,
    #[serde(default = "default_grid")]
    pub ablation_grid: Vec<usize>,
    #[serde(default)]
    pub filter: FilterConfig,
}

impl RunConfig {
    pub fn new(kind: ModelKind, model: ModelConfig, manifest: PathBuf, epochs: u64, checkpoint_dir: PathBuf) -> Self {
        RunConfig {
            kind,
            model,
            manifest,
            epochs,
            checkpoint_dir,
            checkpoint_every: default_every(),
            train_seed: 0,
            init_seed: 0,
            eval_seed: 0,
            val_limit: default_val_limit(),
            ablation_grid: default_grid(),
            filter: FilterConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<(), RunError> {
        self.model.validate()?;
        if self.checkpoint_every == 0 {
            return Err(RunError::Config("checkpoint_every must be at least 1".into()));
        }
        if !self.manifest.is_file() {
            return Err(RunError::Config(format!("manifest {} not found", self.manifest.display())));
        }
        Ok(())
    }
}

/// Pairs of one split, after the duration filter.
pub fn load_pairs(manifest: &CorpusManifest, split: Split, filter: &FilterConfig) -> Result<Vec<ActionPair>, RunError> {
    let mut out = Vec::new();
    for record in manifest.load_split(split)? {
        for pair in extract_pairs(&record)? {
            if let Some(p) = filter_pair(pair, filter).kept() {
                out.push(p);
            }
        }
    }
    Ok(out)
}

/// Write one labeled motion file per record plus a manifest; the last
/// `val_fraction` of records form the validation split.
pub fn write_corpus(dir: &Path, records: &[SequenceRecord], val_fraction: f64) -> Result<PathBuf, RunError> {
    if !(0.0..1.0).contains(&val_fraction) {
        return Err(RunError::Config(format!("val_fraction {val_fraction} outside [0, 1)")));
    }
    let first = records.first().ok_or_else(|| RunError::Config("no sequences to write".into()))?;
    std::fs::create_dir_all(dir).map_err(|source| RunError::Io { path: dir.to_path_buf(), source })?;
    let n_val = (records.len() as f64 * val_fraction).round() as usize;
    let n_train = records.len() - n_val;
    let mut entries = Vec::with_capacity(records.len());
    for (i, r) in records.iter().enumerate() {
        let name = PathBuf::from(format!("seq_{i:05}.json"));
        r.motion.to_file(Some(r.labels())).write(&dir.join(&name))?;
        entries.push(ManifestEntry { path: name, split: if i < n_train { Split::Train } else { Split::Val } });
    }
    let path = dir.join("manifest.json");
    CorpusManifest::new(first.motion.fps(), entries, dir).save(&path)?;
    Ok(path)
}

/// Draw a procedural corpus and write it with [`write_corpus`].
pub fn write_synthetic_corpus(dir: &Path, config: &CorpusConfig, val_fraction: f64) -> Result<PathBuf, RunError> {
    write_corpus(dir, &synth_corpus(config)?, val_fraction)
}

/// Untrained model whose vocabulary and feature statistics come from `pairs`.
pub fn init_model(kind: ModelKind, config: ModelConfig, pairs: &[ActionPair], init_seed: u64) -> Result<Model, RunError> {
    let first = pairs.first().ok_or(RunError::NoPairs)?;
    let texts: Vec<&str> = pairs.iter().flat_map(|p| [p.text_1.as_str(), p.text_2.as_str()]).collect();
    let vocab = Vocabulary::build(&texts).map_err(ModelError::from)?;
    let stats = training_stats(kind, pairs)?;
    let skeleton = first.motion_1.skeleton().clone();
    Ok(Model::new(kind, config, vocab, stats, skeleton, first.motion_1.fps(), init_seed)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub kind: ModelKind,
    pub epochs_done: u64,
    pub steps: u64,
    pub last_loss: Option<LossReport>,
    pub best_val_ape: Option<f64>,
    pub best_epoch: Option<u64>,
    pub checkpoints: Vec<PathBuf>,
}

fn resume_error(path: &Path, e: impl std::fmt::Display) -> RunError {
    RunError::Resume { path: path.to_path_buf(), reason: e.to_string() }
}

/// Rows of an existing loss log up to and including `step`.
fn loss_rows_until(path: &Path, step: u64) -> Result<Vec<String>, RunError> {
    let text = std::fs::read_to_string(path).map_err(|e| resume_error(path, e))?;
    let mut lines = text.lines();
    if lines.next() != Some(LossRecord::CSV_HEADER) {
        return Err(resume_error(path, "unexpected loss log header"));
    }
    let mut rows = Vec::new();
    for line in lines.filter(|l| !l.is_empty()) {
        let s: u64 = line
            .split(',')
            .next()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| resume_error(path, format!("bad loss log row {line:?}")))?;
        if s <= step {
            rows.push(line.to_string());
        }
    }
    Ok(rows)
}

fn write_rows(path: &Path, header: &str, rows: &[String]) -> Result<(), RunError> {
    let mut text = String::with_capacity(rows.len() * 80);
    text.push_str(header);
    text.push('\n');
    for r in rows {
        text.push_str(r);
        text.push('\n');
    }
    write_atomic(path, text.as_bytes()).map_err(|e| RunError::Io { path: path.to_path_buf(), source: e.source })
}

fn save(ckpt: &Checkpoint, path: &Path) -> Result<(), RunError> {
    ckpt.save(path)?;
    Ok(())
}

/// Mean-global APE of the model on (a prefix of) the validation pairs.
pub fn validation_ape(model: &Model, val: &[ActionPair], limit: Option<usize>, seed: u64) -> Result<f64, RunError> {
    let n = limit.map_or(val.len(), |l| l.min(val.len()));
    let report = evaluate(model, Strategy::for_kind(model.kind), StitchConfig::default(), &val[..n], seed)?;
    Ok(report.ape.mean_global)
}

/// Train for `config.epochs` epochs, or continue a previous run from the
/// last checkpoint in the checkpoint directory when `resume` is set.
pub fn train(config: &RunConfig, resume: bool, mut log: impl FnMut(&str)) -> Result<TrainSummary, RunError> {
    config.validate()?;
    let dir = &config.checkpoint_dir;
    std::fs::create_dir_all(dir).map_err(|source| RunError::Io { path: dir.clone(), source })?;
    let manifest = CorpusManifest::load(&config.manifest)?;
    let train_pairs = load_pairs(&manifest, Split::Train, &config.filter)?;
    if train_pairs.is_empty() {
        return Err(RunError::NoPairs);
    }
    let val_pairs = load_pairs(&manifest, Split::Val, &config.filter)?;
    let last_path = dir.join(LAST_CHECKPOINT);
    let best_path = dir.join(BEST_CHECKPOINT);
    let loss_path = dir.join(LOSS_CSV);

    let (mut trainer, start_epoch, mut rows, mut best) = if resume {
        let ckpt = Checkpoint::load(&last_path).map_err(|e| resume_error(&last_path, e))?;
        if ckpt.kind != config.kind {
            return Err(resume_error(&last_path, format!("checkpoint is a {:?} model", ckpt.kind)));
        }
        let trainer = ckpt.to_trainer().map_err(|e| resume_error(&last_path, e))?;
        let rows = loss_rows_until(&loss_path, trainer.steps_done())?;
        let best = if best_path.is_file() {
            let b = Checkpoint::load(&best_path).map_err(|e| resume_error(&best_path, e))?;
            b.val_ape.map(|v| (v, b.epoch))
        } else {
            None
        };
        log(&format!("resuming at epoch {} (step {})", ckpt.epoch, trainer.steps_done()));
        (trainer, ckpt.epoch, rows, best)
    } else {
        if last_path.exists() {
            return Err(RunError::Config(format!(
                "{} already holds a run; resume it or choose another directory",
                dir.display()
            )));
        }
        let model = init_model(config.kind, config.model.clone(), &train_pairs, config.init_seed)?;
        (Trainer::new(model, config.train_seed), 0, Vec::new(), None)
    };
    let items = prepare_items(config.kind, &train_pairs, &trainer.model.vocab, &trainer.model.stats)?;
    log(&format!("{} training items, {} validation pairs", items.len(), val_pairs.len()));

    let mut checkpoints = Vec::new();
    let mut last_loss = None;
    let end_epoch = start_epoch.max(config.epochs);
    for epoch in start_epoch..end_epoch {
        let records = trainer.epoch(&items, epoch)?;
        rows.extend(records.iter().map(LossRecord::csv_row));
        write_rows(&loss_path, LossRecord::CSV_HEADER, &rows)?;
        let done = epoch + 1;
        let mean = records.iter().fold(LossReport::default(), |a, r| a.add(&r.report)).scaled(1.0 / records.len() as f64);
        last_loss = Some(mean);
        if done % config.checkpoint_every != 0 && done != end_epoch {
            log(&format!("epoch {done}: loss {:.5} recon {:.5}", mean.total, mean.recon));
            continue;
        }
        let val_ape = if val_pairs.is_empty() {
            None
        } else {
            Some(validation_ape(&trainer.model, &val_pairs, config.val_limit, config.eval_seed)?)
        };
        let mut ckpt = Checkpoint::from_trainer(&trainer, done);
        ckpt.val_ape = val_ape;
        let epoch_path = dir.join(format!("epoch-{done:04}.ckpt.json"));
        save(&ckpt, &epoch_path)?;
        save(&ckpt, &last_path)?;
        checkpoints.push(epoch_path);
        if let Some(v) = val_ape {
            if best.is_none_or(|(b, _)| v < b) {
                best = Some((v, done));
                save(&ckpt, &best_path)?;
            }
        }
        log(&format!(
            "epoch {done}: loss {:.5} recon {:.5} val APE {}",
            mean.total,
            mean.recon,
            val_ape.map_or("n/a".to_string(), |v| format!("{v:.4}"))
        ));
    }
    Ok(TrainSummary {
        kind: config.kind,
        epochs_done: end_epoch,
        steps: trainer.steps_done(),
        last_loss,
        best_val_ape: best.map(|b| b.0),
        best_epoch: best.map(|b| b.1),
        checkpoints,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub past_frames: usize,
    pub report: MetricReport,
}

pub fn ablation_csv(rows: &[AblationRow]) -> String {
    let mut out = format!("past_frames,{}\n", MetricReport::CSV_HEADER);
    for r in rows {
        out.push_str(&format!("{},{}\n", r.past_frames, r.report.csv_row()));
    }
    out
}

/// Train one TEACH model per past-frame count of the grid and evaluate each
/// on the validation split. Each run lives in `<checkpoint_dir>/p<P>`.
pub fn ablate(config: &RunConfig, mut log: impl FnMut(&str)) -> Result<Vec<AblationRow>, RunError> {
    if config.ablation_grid.is_empty() {
        return Err(RunError::Config("empty ablation grid".into()));
    }
    let manifest = CorpusManifest::load(&config.manifest)?;
    let val = load_pairs(&manifest, Split::Val, &config.filter)?;
    if val.is_empty() {
        return Err(RunError::Config("ablation needs validation pairs".into()));
    }
    let mut rows = Vec::new();
    for &p in &config.ablation_grid {
        let run = RunConfig {
            kind: ModelKind::Teach,
            model: ModelConfig { past_frames: p, ..config.model.clone() },
            checkpoint_dir: config.checkpoint_dir.join(format!("p{p}")),
            ..config.clone()
        };
        log(&format!("past frames {p}"));
        train(&run, false, &mut log)?;
        let model = Checkpoint::load(&run.checkpoint_dir.join(LAST_CHECKPOINT))?.to_model()?;
        let n = config.val_limit.map_or(val.len(), |l| l.min(val.len()));
        let report = evaluate(&model, Strategy::Teach, StitchConfig::default(), &val[..n], config.eval_seed)?;
        rows.push(AblationRow { past_frames: p, report });
    }
    let path = config.checkpoint_dir.join(ABLATION_CSV);
    write_atomic(&path, ablation_csv(&rows).as_bytes()).map_err(|e| RunError::Io { path, source: e.source })?;
    Ok(rows)
}
