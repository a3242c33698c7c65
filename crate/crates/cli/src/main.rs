mod args;

use std::path::Path;
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::Parser;
use fieldnotes::backend::{
    Backend, LiveConfig, OpenAiBackend, RecordingBackend, ReplayBackend, RetryPolicy, ScriptedBackend,
};
use fieldnotes::harness::{self, apply_eval_stats, load_items, EngineConfig, RunReport};
use fieldnotes::notes::{error_rate, prune_eligible, KnowledgeBase, PruneConfig};
use fieldnotes::reflect::KeywordFilter;
use fieldnotes::select::{Embedder, HashingEmbedder, HttpEmbedder};
use tracing_subscriber::EnvFilter;

use args::{BackendSpec, Cli, Command, EmbedderKind, NotesAction, PruneArgs, RunArgs, TraceAction};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new(level)))
        .with_writer(std::io::stderr)
        .init();

    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Train(args) => train(args),
        Command::Eval(args) => eval(args),
        Command::Notes { action } => notes(action),
        Command::Trace { action: TraceAction::Dump { episode_id, traces } } => {
            let record = harness::load_episode(&traces, &episode_id)?;
            println!("{}", serde_json::to_string_pretty(&record)?);
            Ok(())
        }
    }
}

fn prune_config(p: &PruneArgs) -> Result<PruneConfig> {
    PruneConfig::new(p.tau, p.n_min).context("invalid pruning thresholds")
}

/// Everything that can be checked without touching items or the model.
fn engine_config(args: &RunArgs, eval: bool) -> Result<EngineConfig> {
    let base = if eval { EngineConfig::eval() } else { EngineConfig::train() };
    let expansion = args.expansion.map(|s| s.on()).unwrap_or(base.expansion);
    if eval && expansion {
        bail!("--expansion on conflicts with eval: the knowledge base is read-only during eval");
    }
    let keywords = match &args.keywords {
        Some(path) => KeywordFilter::load(path).with_context(|| format!("loading keywords from {}", path.display()))?,
        None => KeywordFilter::default(),
    };
    let cfg = EngineConfig {
        frames: args.frames,
        resolution: args.resolution,
        theta: args.theta,
        prune: prune_config(&args.prune)?,
        max_iters: args.max_iters,
        expansion,
        keywords,
        traces_dir: Some(args.traces.clone()),
    };
    cfg.validate()?;
    Ok(cfg)
}

fn api_key(args: &RunArgs) -> Option<String> {
    std::env::var(&args.live.api_key_env).ok().filter(|k| !k.is_empty())
}

fn build_backend(args: &RunArgs) -> Result<Box<dyn Backend>> {
    Ok(match &args.backend {
        BackendSpec::Live => {
            let Some(model) = &args.live.model else {
                bail!("--backend live needs --model");
            };
            let mut cfg = LiveConfig::new(&args.live.base_url, model);
            cfg.api_key = api_key(args);
            cfg.timeout = Duration::from_secs(args.live.timeout_secs);
            if args.live.max_retries == 0 {
                bail!("--max-retries must be at least 1");
            }
            cfg.retry = RetryPolicy { max_attempts: args.live.max_retries, ..RetryPolicy::default() };
            Box::new(OpenAiBackend::new(cfg)?)
        }
        BackendSpec::Scripted(path) => {
            Box::new(ScriptedBackend::load(path).with_context(|| format!("loading {}", path.display()))?)
        }
        BackendSpec::Replay(path) => {
            Box::new(ReplayBackend::load(path).with_context(|| format!("loading {}", path.display()))?)
        }
    })
}

fn build_embedder(args: &RunArgs) -> Result<Box<dyn Embedder>> {
    Ok(match args.embed.embedder {
        EmbedderKind::Hashing => Box::new(HashingEmbedder::default()),
        EmbedderKind::Http => {
            let Some(model) = &args.embed.embed_model else {
                bail!("--embedder http needs --embed-model");
            };
            let url = args.embed.embed_url.as_deref().unwrap_or(&args.live.base_url);
            Box::new(HttpEmbedder::new(url, model, api_key(args), Duration::from_secs(args.live.timeout_secs))?)
        }
    })
}

fn load_kb(path: &Path) -> Result<KnowledgeBase> {
    KnowledgeBase::load(path).with_context(|| format!("loading knowledge base {}", path.display()))
}

fn emit(report: &RunReport, args: &RunArgs) -> Result<()> {
    if let Some(path) = &args.report {
        std::fs::write(path, report.to_json()).with_context(|| format!("writing {}", path.display()))?;
    }
    if args.json {
        print!("{}", report.to_json());
    } else {
        print!("{report}");
    }
    Ok(())
}

/// Runs `f` with the configured backend, recording into a cassette if asked.
fn with_backend<T>(args: &RunArgs, f: impl FnOnce(&dyn Backend) -> Result<T>) -> Result<T> {
    let backend = build_backend(args)?;
    match &args.record {
        None => f(backend.as_ref()),
        Some(path) => {
            let recorder = RecordingBackend::new(backend);
            let out = f(&recorder);
            recorder.save(path).with_context(|| format!("saving cassette {}", path.display()))?;
            out
        }
    }
}

fn train(args: RunArgs) -> Result<()> {
    let cfg = engine_config(&args, false)?;
    let embedder = build_embedder(&args)?;
    let items = load_items(&args.items)?;
    if let Some(item) = items.iter().find(|i| i.answer.is_none()) {
        bail!("train needs labelled items; `{}` has no answer", item.id);
    }
    let mut kb = if args.kb.exists() { load_kb(&args.kb)? } else { KnowledgeBase::new() };
    let report = with_backend(&args, |backend| {
        Ok(harness::run_train(&mut kb, &items, backend, embedder.as_ref(), &cfg, Some(&args.kb))?)
    })?;
    kb.save(&args.kb)?;
    emit(&report, &args)
}

fn eval(args: args::EvalArgs) -> Result<()> {
    let cfg = engine_config(&args.run, true)?;
    if args.parallel == 0 {
        bail!("--parallel must be at least 1");
    }
    let embedder = build_embedder(&args.run)?;
    let items = load_items(&args.run.items)?;
    let mut kb = load_kb(&args.run.kb)?;
    let mut report = with_backend(&args.run, |backend| {
        Ok(harness::run_eval(&kb, &items, backend, embedder.as_ref(), &cfg, args.parallel)?)
    })?;
    if args.eval_stats.on() {
        report.pruned_nodes = apply_eval_stats(&mut kb, &report, cfg.prune)?;
        kb.save(&args.run.kb)?;
    }
    emit(&report, &args.run)
}

fn notes(action: NotesAction) -> Result<()> {
    match action {
        NotesAction::Show(kb) => {
            let kb = load_kb(&kb.kb)?;
            println!("revision {}", kb.revision());
            println!("general tips:");
            for tip in kb.general_tips() {
                println!("  - {}", tip.text);
            }
            for node in kb.nodes() {
                println!("\n[{}] {}", node.name, node.description);
                for tip in &node.details {
                    println!("  - {}", tip.text);
                }
            }
        }
        NotesAction::Stats(kb) => {
            let kb = load_kb(&kb.kb)?;
            let cfg = PruneConfig::default();
            println!("{:<32} {:>6} {:>6} {:>6} {:>7} {:>5}", "node", "n+", "n-", "acts", "error", "tips");
            for node in kb.nodes() {
                let s = node.stats;
                let flag = if prune_eligible(s, cfg) { " *" } else { "" };
                println!(
                    "{:<32} {:>6} {:>6} {:>6} {:>7.3} {:>5}{flag}",
                    node.name,
                    s.n_plus,
                    s.n_minus,
                    s.activations(),
                    error_rate(s),
                    node.details.len()
                );
            }
        }
        NotesAction::PruneCheck { kb: path, prune, apply } => {
            let cfg = prune_config(&prune)?;
            let mut kb = load_kb(&path.kb)?;
            let doomed: Vec<String> =
                kb.nodes().filter(|n| prune_eligible(n.stats, cfg)).map(|n| n.name.clone()).collect();
            if doomed.is_empty() {
                println!("no node meets the pruning rule (tau {}, n_min {})", cfg.tau, cfg.n_min);
            }
            for name in &doomed {
                println!("{name}");
            }
            if apply && !doomed.is_empty() {
                kb.prune_sweep(cfg);
                kb.save(&path.kb)?;
                println!("removed {} node(s)", doomed.len());
            }
        }
    }
    Ok(())
}
