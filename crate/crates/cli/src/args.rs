use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "fieldnotes", version, about = "Grounded visual reasoning runs with an evolving note store")]
pub struct Cli {
    /// Log verbosity (-v info, -vv debug). RUST_LOG overrides.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evolve the knowledge base over labelled items, one at a time.
    Train(RunArgs),
    /// Score items against a fixed knowledge base.
    Eval(EvalArgs),
    /// Inspect or maintain a knowledge base file.
    Notes {
        #[command(subcommand)]
        action: NotesAction,
    },
    /// Inspect stored episode traces.
    Trace {
        #[command(subcommand)]
        action: TraceAction,
    },
}

#[derive(Debug, Subcommand)]
pub enum NotesAction {
    /// Print general tips and every task node with its details.
    Show(KbArg),
    /// Per-node outcome statistics.
    Stats(KbArg),
    /// List nodes the pruning rule would remove under the given thresholds.
    PruneCheck {
        #[command(flatten)]
        kb: KbArg,
        #[command(flatten)]
        prune: PruneArgs,
        /// Remove them and save the file.
        #[arg(long)]
        apply: bool,
    },
}

#[derive(Debug, Subcommand)]
pub enum TraceAction {
    /// Print the stored record of one episode (episode id = item id).
    Dump {
        episode_id: String,
        #[arg(long, default_value = "traces")]
        traces: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct KbArg {
    #[arg(long)]
    pub kb: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Switch {
    On,
    Off,
}

impl Switch {
    pub fn on(self) -> bool {
        self == Switch::On
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EmbedderKind {
    /// Deterministic local feature hashing.
    Hashing,
    /// OpenAI-compatible `/v1/embeddings` endpoint.
    Http,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BackendSpec {
    Live,
    Scripted(PathBuf),
    Replay(PathBuf),
}

pub fn parse_backend(s: &str) -> Result<BackendSpec, String> {
    match s.split_once(':') {
        None if s == "live" => Ok(BackendSpec::Live),
        Some(("scripted", p)) if !p.is_empty() => Ok(BackendSpec::Scripted(p.into())),
        Some(("replay", p)) if !p.is_empty() => Ok(BackendSpec::Replay(p.into())),
        _ => Err("expected `live`, `scripted:<fixtures.json>` or `replay:<cassette.json>`".into()),
    }
}

#[derive(Debug, Args)]
pub struct PruneArgs {
    /// Error-rate threshold, strictly between 0 and 1.
    #[arg(long, default_value_t = 0.7)]
    pub tau: f64,
    /// Minimum activations before a node may be pruned.
    #[arg(long, default_value_t = 8)]
    pub n_min: u64,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// JSONL items file.
    pub items: PathBuf,

    #[arg(long)]
    pub kb: PathBuf,

    #[arg(long, value_parser = parse_backend, default_value = "live")]
    pub backend: BackendSpec,

    /// Also record every exchange into this cassette.
    #[arg(long)]
    pub record: Option<PathBuf>,

    #[arg(long, default_value_t = 3)]
    pub max_iters: u32,

    /// Selection threshold; defaults to the embedder's own.
    #[arg(long)]
    pub theta: Option<f64>,

    #[command(flatten)]
    pub prune: PruneArgs,

    #[arg(long, default_value_t = 4)]
    pub frames: u32,

    #[arg(long, default_value_t = 512)]
    pub resolution: u32,

    /// Allow creating task nodes for unmatched questions (default: on for
    /// train, off for eval).
    #[arg(long, value_enum)]
    pub expansion: Option<Switch>,

    /// Physical-operator keyword file, one per line.
    #[arg(long)]
    pub keywords: Option<PathBuf>,

    /// Directory for per-episode trace files.
    #[arg(long, default_value = "traces")]
    pub traces: PathBuf,

    /// Also write the report as JSON here.
    #[arg(long)]
    pub report: Option<PathBuf>,

    /// Print the report as JSON instead of a table.
    #[arg(long)]
    pub json: bool,

    #[command(flatten)]
    pub live: LiveArgs,

    #[command(flatten)]
    pub embed: EmbedArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub run: RunArgs,

    /// Concurrent episodes.
    #[arg(long, default_value_t = 1)]
    pub parallel: usize,

    /// Fold eval outcomes into node statistics afterwards and save the kb.
    #[arg(long, value_enum, default_value = "off")]
    pub eval_stats: Switch,
}

#[derive(Debug, Args)]
pub struct LiveArgs {
    #[arg(long, default_value = "http://localhost:8000")]
    pub base_url: String,
    #[arg(long)]
    pub model: Option<String>,
    /// Environment variable holding the API key.
    #[arg(long, default_value = "OPENAI_API_KEY")]
    pub api_key_env: String,
    #[arg(long, default_value_t = 120)]
    pub timeout_secs: u64,
    /// Total attempts per request, including the first.
    #[arg(long, default_value_t = 5)]
    pub max_retries: u32,
}

#[derive(Debug, Args)]
pub struct EmbedArgs {
    #[arg(long, value_enum, default_value = "hashing")]
    pub embedder: EmbedderKind,
    /// Embeddings endpoint base URL (defaults to --base-url).
    #[arg(long)]
    pub embed_url: Option<String>,
    #[arg(long)]
    pub embed_model: Option<String>,
}
