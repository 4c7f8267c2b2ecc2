mod local;
mod remote;

use std::net::{IpAddr, Ipv4Addr};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use motion_compose::compose::{StitchMode, Strategy};
use motion_compose::dataset::Split;
use motion_compose::model::ModelKind;
use motion_compose_server::{CHECKPOINT_ENV, DEFAULT_PORT, PORT_ENV, SESSION_DIR_ENV};

#[derive(Parser)]
#[command(name = "motion-compose", version, about = "Compose skeletal motion from a sequence of text prompts")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build or inspect motion corpora.
    #[command(subcommand)]
    Dataset(DatasetCommand),
    /// Shorthand for `dataset synth`.
    Synth(SynthArgs),
    /// Train a model on a corpus manifest.
    Train(TrainArgs),
    /// Generate a composed motion from a prompt list.
    Compose(ComposeArgs),
    /// Score a checkpoint on the pairs of a corpus split.
    Eval(EvalArgs),
    /// Train and score TEACH models over a grid of past-frame counts.
    Ablate(TrainArgs),
    /// Run the HTTP session service.
    Serve(ServeArgs),
    /// Drive a running session service.
    #[command(subcommand)]
    Session(SessionCommand),
}

#[derive(Subcommand)]
enum DatasetCommand {
    /// Write a procedural corpus with a manifest.
    Synth(SynthArgs),
    /// Count the action pairs of a corpus.
    Pairs(PairsArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Output directory for motion files and manifest.json.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// JSON list of sequences, each a list of {"action_name", "duration_s"};
    /// without it a random corpus is drawn.
    #[arg(long)]
    actions: Option<PathBuf>,
    /// Number of random sequences.
    #[arg(long, default_value_t = 250)]
    sequences: usize,
    /// Fraction of sequences placed in the validation split.
    #[arg(long, default_value_t = 0.15)]
    val_fraction: f64,
}

#[derive(Args)]
struct PairsArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, value_enum, default_value_t = SplitArg::Train)]
    split: SplitArg,
    /// Print duration and source statistics.
    #[arg(long)]
    stats: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Val,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Split {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Val => Split::Val,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    /// Full-size network.
    Paper,
    /// Small network for CPU training.
    Desk,
    /// Smallest network.
    Tiny,
}

#[derive(Args)]
struct TrainArgs {
    /// Run configuration as JSON; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Checkpoint directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_parser = parse_kind)]
    kind: Option<ModelKind>,
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    #[arg(long)]
    epochs: Option<u64>,
    #[arg(long)]
    checkpoint_every: Option<u64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    past_frames: Option<usize>,
    /// Seed of initialization and batch order.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    eval_seed: Option<u64>,
    /// Validation pairs scored per checkpoint (0 for all).
    #[arg(long)]
    val_limit: Option<usize>,
    /// Past-frame counts of the ablation, comma separated.
    #[arg(long, value_delimiter = ',')]
    grid: Option<Vec<usize>>,
    /// Continue the run in the checkpoint directory.
    #[arg(long)]
    resume: bool,
}

#[derive(Args)]
struct ComposeArgs {
    #[arg(long, value_parser = parse_strategy, default_value = "teach")]
    strategy: Strategy,
    /// JSON list of {"text", "duration_s"}.
    #[arg(long)]
    prompts: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = motion_compose::compose::DEFAULT_SLERP_FRAMES)]
    slerp_frames: usize,
    #[arg(long, value_parser = parse_stitch_mode, default_value = "overwrite")]
    stitch_mode: StitchMode,
    /// Use latent means instead of sampling.
    #[arg(long)]
    deterministic: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, value_parser = parse_strategy)]
    strategy: Option<Strategy>,
    #[arg(long, value_enum, default_value_t = SplitArg::Val)]
    split: SplitArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Score only the first N pairs.
    #[arg(long)]
    limit: Option<usize>,
    #[arg(long, default_value_t = motion_compose::compose::DEFAULT_SLERP_FRAMES)]
    slerp_frames: usize,
    #[arg(long, value_parser = parse_stitch_mode, default_value = "overwrite")]
    stitch_mode: StitchMode,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, env = CHECKPOINT_ENV)]
    checkpoint: PathBuf,
    #[arg(long, env = PORT_ENV, default_value_t = DEFAULT_PORT)]
    port: u16,
    #[arg(long, default_value_t = IpAddr::V4(Ipv4Addr::LOCALHOST))]
    host: IpAddr,
    /// Save sessions here and restore them on start.
    #[arg(long, env = SESSION_DIR_ENV)]
    session_dir: Option<PathBuf>,
    /// Base seed of sessions created without one.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = motion_compose::compose::DEFAULT_SLERP_FRAMES)]
    slerp_frames: usize,
    #[arg(long, value_parser = parse_stitch_mode, default_value = "overwrite")]
    stitch_mode: StitchMode,
}

#[derive(Args)]
struct Remote {
    /// Base URL of the session service.
    #[arg(long, env = "MOTION_COMPOSE_URL", default_value = "http://127.0.0.1:7860")]
    url: String,
}

#[derive(Subcommand)]
enum SessionCommand {
    /// Create a session and print its id.
    New {
        #[command(flatten)]
        remote: Remote,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Append one action.
    Append {
        #[command(flatten)]
        remote: Remote,
        id: String,
        #[arg(long)]
        text: String,
        #[arg(long)]
        duration: f64,
        #[arg(long)]
        idempotency_key: Option<String>,
    },
    /// Print a session's prompts and spans.
    Show {
        #[command(flatten)]
        remote: Remote,
        id: String,
    },
    /// Save a session's motion file.
    Export {
        #[command(flatten)]
        remote: Remote,
        id: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Drop a session.
    Delete {
        #[command(flatten)]
        remote: Remote,
        id: String,
    },
    /// Create a session, append every prompt of a file and save the motion.
    Run {
        #[command(flatten)]
        remote: Remote,
        #[arg(long)]
        prompts: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn parse_kind(s: &str) -> Result<ModelKind, String> {
    s.parse()
}

fn parse_strategy(s: &str) -> Result<Strategy, String> {
    s.parse()
}

fn parse_stitch_mode(s: &str) -> Result<StitchMode, String> {
    s.parse()
}

fn main() -> anyhow::Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info")),
        )
        .with_writer(std::io::stderr)
        .init();
    match Cli::parse().command {
        Command::Dataset(DatasetCommand::Synth(a)) | Command::Synth(a) => local::synth(a),
        Command::Dataset(DatasetCommand::Pairs(a)) => local::pairs(a),
        Command::Train(a) => local::train(a),
        Command::Compose(a) => local::compose(a),
        Command::Eval(a) => local::eval(a),
        Command::Ablate(a) => local::ablate(a),
        Command::Serve(a) => runtime()?.block_on(remote::serve(a)),
        Command::Session(c) => runtime()?.block_on(remote::session(c)),
    }
}

fn runtime() -> anyhow::Result<tokio::runtime::Runtime> {
    Ok(tokio::runtime::Builder::new_multi_thread().enable_all().build()?)
}
