use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{bail, Context, Result};
use motion_compose::compose::{compose as compose_motion, CompositionRequest, StitchConfig, Strategy};
use motion_compose::dataset::{
    extract_pairs, filter_pair, synth_generate, ActionSpec, CorpusConfig, CorpusManifest, FilterConfig, Filtered,
    Rejection, Split,
};
use motion_compose::io::write_atomic;
use motion_compose::metrics::{evaluate, MetricReport};
use motion_compose::model::{Checkpoint, Model, ModelConfig, ModelKind, Prompt, Sampling};
use motion_compose::motion::FrameLabel;
use motion_compose::rng::derive_seed;
use motion_compose::runner::{self, ablation_csv, load_pairs, RunConfig};
use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::{ComposeArgs, EvalArgs, PairsArgs, Preset, SynthArgs, TrainArgs};

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_slice(&bytes).with_context(|| format!("parsing {}", path.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)?;
    Ok(())
}

fn load_model(path: &Path) -> Result<Model> {
    Checkpoint::load(path)
        .and_then(|c| c.to_model())
        .with_context(|| format!("loading checkpoint {}", path.display()))
}

pub fn synth(a: SynthArgs) -> Result<()> {
    let manifest = match &a.actions {
        Some(path) => {
            let plans: Vec<Vec<ActionSpec>> = read_json(path)?;
            let records = plans
                .iter()
                .enumerate()
                .map(|(i, plan)| synth_generate(plan, derive_seed(a.seed, &[i as u64])))
                .collect::<Result<Vec<_>, _>>()?;
            runner::write_corpus(&a.out, &records, a.val_fraction)?
        }
        None => {
            let config = CorpusConfig { sequences: a.sequences, seed: a.seed, ..CorpusConfig::default() };
            runner::write_synthetic_corpus(&a.out, &config, a.val_fraction)?
        }
    };
    println!("{}", manifest.display());
    Ok(())
}

pub fn pairs(a: PairsArgs) -> Result<()> {
    let manifest = CorpusManifest::load(&a.manifest)?;
    let filter = FilterConfig::default();
    let mut kept = Vec::new();
    let (mut short, mut long) = (0usize, 0usize);
    for record in manifest.load_split(Split::from(a.split))? {
        for pair in extract_pairs(&record)? {
            match filter_pair(pair, &filter) {
                Filtered::Kept(p) => kept.push(p),
                Filtered::Rejected(Rejection::TooShort { .. }) => short += 1,
                Filtered::Rejected(Rejection::TooLong { .. }) => long += 1,
            }
        }
    }
    println!("pairs: {}", kept.len());
    if a.stats {
        println!("rejected too short: {short}");
        println!("rejected too long: {long}");
        let mut sources = BTreeMap::new();
        for p in &kept {
            *sources.entry(format!("{:?}", p.source)).or_insert(0usize) += 1;
        }
        for (s, n) in sources {
            println!("source {s}: {n}");
        }
        let durations: Vec<f64> = kept.iter().map(|p| p.duration_seconds()).collect();
        if !durations.is_empty() {
            let mean = durations.iter().sum::<f64>() / durations.len() as f64;
            let min = durations.iter().copied().fold(f64::INFINITY, f64::min);
            let max = durations.iter().copied().fold(0.0, f64::max);
            println!("pair duration s: mean {mean:.3} min {min:.3} max {max:.3}");
        }
        let texts: std::collections::BTreeSet<&str> =
            kept.iter().flat_map(|p| [p.text_1.as_str(), p.text_2.as_str()]).collect();
        println!("distinct texts: {}", texts.len());
    }
    Ok(())
}

fn run_config(a: &TrainArgs) -> Result<RunConfig> {
    let mut config = match &a.config {
        Some(path) => read_json::<RunConfig>(path)?,
        None => {
            let (Some(manifest), Some(out)) = (&a.manifest, &a.out) else {
                bail!("give --config or both --manifest and --out");
            };
            let kind = a.kind.unwrap_or(ModelKind::Teach);
            RunConfig::new(kind, ModelConfig::desk(), manifest.clone(), 20, out.clone())
        }
    };
    if let Some(m) = &a.manifest {
        config.manifest = m.clone();
    }
    if let Some(o) = &a.out {
        config.checkpoint_dir = o.clone();
    }
    if let Some(k) = a.kind {
        config.kind = k;
    }
    if let Some(p) = a.preset {
        config.model = match p {
            Preset::Paper => ModelConfig::default(),
            Preset::Desk => ModelConfig::desk(),
            Preset::Tiny => ModelConfig::tiny(),
        };
    }
    if let Some(e) = a.epochs {
        config.epochs = e;
    }
    if let Some(e) = a.checkpoint_every {
        config.checkpoint_every = e;
    }
    if let Some(lr) = a.lr {
        config.model.learning_rate = lr;
    }
    if let Some(b) = a.batch_size {
        config.model.batch_size = b;
    }
    if let Some(p) = a.past_frames {
        config.model.past_frames = p;
    }
    if let Some(s) = a.seed {
        config.train_seed = s;
        config.init_seed = s;
    }
    if let Some(s) = a.eval_seed {
        config.eval_seed = s;
    }
    if let Some(l) = a.val_limit {
        config.val_limit = (l > 0).then_some(l);
    }
    if let Some(g) = &a.grid {
        config.ablation_grid = g.clone();
    }
    Ok(config)
}

fn progress(line: &str) {
    tracing::info!("{line}");
}

pub fn train(a: TrainArgs) -> Result<()> {
    let config = run_config(&a)?;
    std::fs::create_dir_all(&config.checkpoint_dir)?;
    if !a.resume && !config.checkpoint_dir.join(runner::LAST_CHECKPOINT).exists() {
        write_json(&config.checkpoint_dir.join("run.json"), &config)?;
    }
    let summary = runner::train(&config, a.resume, progress)?;
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}

pub fn ablate(a: TrainArgs) -> Result<()> {
    let config = run_config(&a)?;
    if a.resume {
        bail!("ablation runs cannot be resumed");
    }
    let rows = runner::ablate(&config, progress)?;
    print!("{}", ablation_csv(&rows));
    Ok(())
}

pub fn compose(a: ComposeArgs) -> Result<()> {
    let model = load_model(&a.checkpoint)?;
    let prompts: Vec<Prompt> = read_json(&a.prompts)?;
    let sampling = if a.deterministic { Sampling::Deterministic } else { Sampling::Stochastic(a.seed) };
    let request = CompositionRequest {
        prompts: prompts.clone(),
        strategy: a.strategy,
        stitch: StitchConfig { slerp_frames: a.slerp_frames, mode: a.stitch_mode },
        sampling,
    };
    let out = compose_motion(&request, &model)?;
    let labels = prompts
        .iter()
        .zip(&out.spans)
        .map(|(p, s)| FrameLabel { text: p.text.clone(), start_frame: s.start, end_frame: s.end })
        .collect();
    out.motion.to_file(Some(labels)).write(&a.out)?;
    for (p, s) in prompts.iter().zip(&out.spans) {
        println!("[{}, {}) {}", s.start, s.end, p.text);
    }
    Ok(())
}

#[derive(Serialize)]
struct EvalEcho {
    checkpoint_sha256: String,
    manifest: String,
    split: Split,
    strategy: Strategy,
    stitch: StitchConfig,
    seed: u64,
    limit: Option<usize>,
    filter: FilterConfig,
}

#[derive(Serialize)]
struct EvalOutput {
    #[serde(flatten)]
    report: MetricReport,
    config: EvalEcho,
    config_hash: String,
}

pub fn eval(a: EvalArgs) -> Result<()> {
    let bytes = std::fs::read(&a.checkpoint).with_context(|| format!("reading {}", a.checkpoint.display()))?;
    let model = load_model(&a.checkpoint)?;
    let strategy = a.strategy.unwrap_or(Strategy::for_kind(model.kind));
    let filter = FilterConfig::default();
    let manifest = CorpusManifest::load(&a.manifest)?;
    let split = Split::from(a.split);
    let pairs = load_pairs(&manifest, split, &filter)?;
    let n = a.limit.map_or(pairs.len(), |l| l.min(pairs.len()));
    if n == 0 {
        bail!("no pairs to evaluate");
    }
    let stitch = StitchConfig { slerp_frames: a.slerp_frames, mode: a.stitch_mode };
    let report = evaluate(&model, strategy, stitch, &pairs[..n], a.seed)?;
    let config = EvalEcho {
        checkpoint_sha256: hex::encode(Sha256::digest(&bytes)),
        manifest: a.manifest.display().to_string(),
        split,
        strategy,
        stitch,
        seed: a.seed,
        limit: a.limit,
        filter,
    };
    let config_hash = hex::encode(Sha256::digest(serde_json::to_vec(&config)?));
    let out = EvalOutput { report, config, config_hash };
    match &a.out {
        Some(path) => {
            write_json(path, &out)?;
            println!("{}", MetricReport::CSV_HEADER);
            println!("{}", out.report.csv_row());
        }
        None => println!("{}", serde_json::to_string_pretty(&out)?),
    }
    Ok(())
}
