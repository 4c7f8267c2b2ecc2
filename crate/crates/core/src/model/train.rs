use std::collections::HashMap;

use ndarray::s;

use super::loss::{cross_kl_node, kl_prior_node, LossReport};
use super::{Model, ModelError, ModelKind, Sampling};
use crate::dataset::{ActionPair, FrameCounts};
use crate::features::{motion_features, FeatureStats};
use crate::motion::{canonicalize, Motion, RigidYaw};
use crate::nn::{AdamW, AdamWConfig, Graph, ParamId, Tensor, Var};
use crate::rng::{derive_seed, stream};
use crate::text::{comma_join, Vocabulary};

/// One training example in standardized feature space.
#[derive(Debug, Clone, PartialEq)]
pub enum TrainItem {
    Pair { text_1: String, tokens_1: Vec<usize>, feats_1: Tensor, text_2: String, tokens_2: Vec<usize>, feats_2: Tensor },
    Single { text: String, tokens: Vec<usize>, feats: Tensor },
}

impl FrameCounts for TrainItem {
    fn frame_counts(&self) -> Vec<usize> {
        match self {
            TrainItem::Pair { feats_1, feats_2, .. } => vec![feats_1.nrows(), feats_2.nrows()],
            TrainItem::Single { feats, .. } => vec![feats.nrows()],
        }
    }
}

/// The motions each model kind learns from, canonicalized the way that
/// kind expects: pairs share the frame of their first frame, singles get
/// their own.
pub fn canonical_views(kind: ModelKind, pair: &ActionPair) -> Result<Vec<(String, Motion)>, ModelError> {
    Ok(match kind {
        ModelKind::Teach => {
            let t = RigidYaw::canonicalizing(pair.motion_1.first())?;
            vec![
                (pair.text_1.clone(), pair.motion_1.transformed(&t)?),
                (pair.text_2.clone(), pair.motion_2.transformed(&t)?),
            ]
        }
        ModelKind::Independent => vec![
            (pair.text_1.clone(), canonicalize(&pair.motion_1)?),
            (pair.text_2.clone(), canonicalize(&pair.motion_2)?),
        ],
        ModelKind::Joint => {
            let joined = canonicalize(&pair.concatenated()?)?;
            vec![(comma_join(&[&pair.text_1, &pair.text_2]), joined)]
        }
    })
}

/// Feature statistics over the canonical views of `pairs`.
pub fn training_stats(kind: ModelKind, pairs: &[ActionPair]) -> Result<FeatureStats, ModelError> {
    let mut mats = Vec::new();
    for p in pairs {
        for (_, m) in canonical_views(kind, p)? {
            mats.push(motion_features(&m));
        }
    }
    Ok(FeatureStats::from_features(&mats)?)
}

pub fn prepare_items(
    kind: ModelKind,
    pairs: &[ActionPair],
    vocab: &Vocabulary,
    stats: &FeatureStats,
) -> Result<Vec<TrainItem>, ModelError> {
    let mut out = Vec::new();
    for p in pairs {
        let views = canonical_views(kind, p)?;
        let mut encoded = Vec::with_capacity(views.len());
        for (text, m) in views {
            let tokens = vocab.encode(&text)?;
            let feats = stats.apply(&motion_features(&m))?;
            encoded.push((text, tokens, feats));
        }
        match kind {
            ModelKind::Teach => {
                let mut it = encoded.into_iter();
                let (text_1, tokens_1, feats_1) = it.next().expect("two views");
                let (text_2, tokens_2, feats_2) = it.next().expect("two views");
                out.push(TrainItem::Pair { text_1, tokens_1, feats_1, text_2, tokens_2, feats_2 });
            }
            ModelKind::Independent | ModelKind::Joint => {
                out.extend(encoded.into_iter().map(|(text, tokens, feats)| TrainItem::Single { text, tokens, feats }))
            }
        }
    }
    Ok(out)
}

/// Loss nodes of one item.
#[derive(Debug, Clone, Copy)]
pub struct LossVars {
    pub total: Var,
    pub recon: Var,
    pub recon_motion: Var,
    pub kl: Var,
    pub cross_kl: Var,
    pub latent_l1: Var,
}

impl LossVars {
    pub fn report(&self, g: &Graph) -> LossReport {
        LossReport {
            total: g.scalar_value(self.total),
            recon: g.scalar_value(self.recon),
            recon_motion: g.scalar_value(self.recon_motion),
            kl: g.scalar_value(self.kl),
            cross_kl: g.scalar_value(self.cross_kl),
            latent_l1: g.scalar_value(self.latent_l1),
        }
    }
}

struct Segment {
    recon: Var,
    recon_motion: Var,
    kl: Var,
    cross: Var,
    l1: Var,
    generated: Var,
}

fn segment(
    model: &Model,
    g: &mut Graph,
    tokens: &[usize],
    gt: &Tensor,
    past: Option<Var>,
    seed: u64,
) -> Segment {
    let net = &model.net;
    let d = model.config.latent_dim;
    let text = net.encode_text(g, tokens);
    let past = past.and_then(|p| net.past_encode(g, p));
    let phi = net.encode_distribution(g, text, past);
    let z = net.sample(g, &phi, Sampling::Stochastic(derive_seed(seed, &[0])).noise(d));
    let generated = net.decode(g, z, gt.nrows());
    let gt_var = g.input(gt.clone());
    let recon = g.smooth_l1(generated, gt_var);
    let phi_m = net.motion_encode(g, gt_var);
    let z_m = net.sample(g, &phi_m, Sampling::Stochastic(derive_seed(seed, &[1])).noise(d));
    let from_motion = net.decode(g, z_m, gt.nrows());
    let recon_motion = g.smooth_l1(from_motion, gt_var);
    let kl = kl_prior_node(g, &phi);
    let cross = cross_kl_node(g, &phi, &phi_m);
    let l1 = g.mean_abs_diff(z, z_m);
    Segment { recon, recon_motion, kl, cross, l1, generated }
}

/// Build the full objective of one item into `g`. Pairs run two passes:
/// the second is conditioned on the tail of the first pass's output (or of
/// the ground truth when `gt_past` is set).
pub fn item_loss(model: &Model, g: &mut Graph, item: &TrainItem, seed: u64) -> Result<LossVars, ModelError> {
    let cfg = &model.config;
    let segs = match (model.kind, item) {
        (ModelKind::Teach, TrainItem::Pair { tokens_1, feats_1, tokens_2, feats_2, .. }) => {
            let first = segment(model, g, tokens_1, feats_1, None, derive_seed(seed, &[1]));
            let n = feats_1.nrows();
            let p = cfg.past_frames.min(n);
            let past = if p == 0 {
                None
            } else if cfg.gt_past {
                Some(g.input(feats_1.slice(s![n - p.., ..]).to_owned()))
            } else {
                Some(g.slice_rows(first.generated, n - p, n))
            };
            let second = segment(model, g, tokens_2, feats_2, past, derive_seed(seed, &[2]));
            vec![first, second]
        }
        (ModelKind::Independent | ModelKind::Joint, TrainItem::Single { tokens, feats, .. }) => {
            vec![segment(model, g, tokens, feats, None, derive_seed(seed, &[1]))]
        }
        (kind, _) => return Err(ModelError::ItemKind(kind)),
    };
    let sum = |g: &mut Graph, vars: Vec<Var>| vars.into_iter().reduce(|a, b| g.add(a, b)).expect("non-empty");
    let recon = sum(g, segs.iter().map(|s| s.recon).collect());
    let recon_motion = sum(g, segs.iter().map(|s| s.recon_motion).collect());
    let kl = sum(g, segs.iter().map(|s| s.kl).collect());
    let cross_kl = sum(g, segs.iter().map(|s| s.cross).collect());
    let latent_l1 = sum(g, segs.iter().map(|s| s.l1).collect());
    let kls = g.add(kl, cross_kl);
    let weighted = g.scale(kls, cfg.lambda_kl);
    let r = g.add(recon, recon_motion);
    let t = g.add(r, weighted);
    let l1 = g.scale(latent_l1, cfg.lambda_latent);
    let total = g.add(t, l1);
    Ok(LossVars { total, recon, recon_motion, kl, cross_kl, latent_l1 })
}

/// Loss report of one item without updating anything (evaluation mode).
pub fn evaluate_item(model: &Model, item: &TrainItem, seed: u64) -> Result<LossReport, ModelError> {
    let mut g = Graph::new(&model.store);
    Ok(item_loss(model, &mut g, item, seed)?.report(&g))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossRecord {
    pub step: u64,
    pub report: LossReport,
}

impl LossRecord {
    pub const CSV_HEADER: &'static str = "step,total,recon,kl,cross_kl,latent_l1,recon_motion";

    pub fn csv_row(&self) -> String {
        let r = &self.report;
        format!(
            "{},{},{},{},{},{},{}",
            self.step, r.total, r.recon, r.kl, r.cross_kl, r.latent_l1, r.recon_motion
        )
    }
}

/// Model plus optimizer state; one [`Trainer::step`] is one update.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub model: Model,
    pub opt: AdamW,
    pub seed: u64,
}

impl Trainer {
    pub fn new(model: Model, seed: u64) -> Self {
        let cfg = AdamWConfig {
            lr: model.config.learning_rate,
            weight_decay: model.config.weight_decay,
            ..AdamWConfig::default()
        };
        let opt = AdamW::new(cfg, &model.store);
        Trainer { model, opt, seed }
    }

    pub fn steps_done(&self) -> u64 {
        self.opt.step
    }

    /// Gradient of the batch-mean loss. Nothing is updated.
    pub fn batch_gradients(
        &self,
        batch: &[&TrainItem],
        step_seed: u64,
    ) -> Result<(LossReport, HashMap<ParamId, Tensor>), ModelError> {
        if batch.is_empty() {
            return Err(ModelError::EmptyBatch);
        }
        let scale = 1.0 / batch.len() as f64;
        let mut report = LossReport::default();
        let mut grads: HashMap<ParamId, Tensor> = HashMap::new();
        for (i, item) in batch.iter().enumerate() {
            let i = i as u64;
            let mut g = Graph::training(&self.model.store, self.model.config.dropout, stream(step_seed, &[i, 1]));
            let vars = item_loss(&self.model, &mut g, item, derive_seed(step_seed, &[i, 0]))?;
            let r = vars.report(&g);
            if !r.is_finite() {
                return Err(ModelError::NonFinite { step: self.opt.step, report: r });
            }
            report = report.add(&r.scaled(scale));
            for (id, gr) in g.backward(vars.total).into_params() {
                match grads.get_mut(&id) {
                    Some(acc) => acc.scaled_add(scale, &gr),
                    None => {
                        grads.insert(id, gr * scale);
                    }
                }
            }
        }
        Ok((report, grads))
    }

    /// One optimizer update on the mean loss of `batch`. A non-finite loss
    /// aborts the step before any parameter changes.
    pub fn step(&mut self, batch: &[&TrainItem]) -> Result<LossRecord, ModelError> {
        let step_seed = derive_seed(self.seed, &[self.opt.step]);
        let (report, grads) = self.batch_gradients(batch, step_seed)?;
        if grads.values().any(|g| g.iter().any(|v| !v.is_finite())) {
            return Err(ModelError::NonFinite { step: self.opt.step, report });
        }
        let mut ids: Vec<&ParamId> = grads.keys().collect();
        ids.sort();
        self.opt.update(&mut self.model.store, ids.into_iter().map(|id| (*id, &grads[id])));
        Ok(LossRecord { step: self.opt.step, report })
    }

    /// One pass over `items` in seeded random order.
    pub fn epoch(&mut self, items: &[TrainItem], epoch: u64) -> Result<Vec<LossRecord>, ModelError> {
        let batches = crate::dataset::batch_iterator(items, self.model.config.batch_size, self.seed, epoch)
            .map_err(|_| ModelError::EmptyBatch)?;
        let mut out = Vec::new();
        for b in batches {
            out.push(self.step(&b.items)?);
        }
        Ok(out)
    }
}
