//! Train and eval runs over a benchmark file.
//!
//! Train is strictly sequential and checkpoints the knowledge base after every
//! item. Eval runs episodes on a bounded worker pool against a shared,
//! read-only knowledge base and reassembles results in item order.

mod extract;
mod items;
mod report;

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use extract::extract_answer;
pub use items::{load_items, parse_items, BenchmarkItem, Choice, Domain, ItemAsset, ItemConverter, Split};
pub use report::{ItemFlags, ItemResult, RunReport, Tally};

use crate::agent::{run_episode, AgentConfig, AgentError, EpisodeContext, ReasoningTrace, DEFAULT_MAX_ITERS};
use crate::backend::Backend;
use crate::canon::{canonicalize, CanonError, DEFAULT_FRAMES, DEFAULT_RESOLUTION};
use crate::notes::{KbEvent, KnowledgeBase, NotesError, PruneConfig};
use crate::reflect::{conclude_training_item, eligibility_for_answer, KeywordFilter, ReflectError};
use crate::select::{discover_node, select_task_node, Discovery, Embedder, SelectError, SelectionResult};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("items line {line}: {detail}")]
    SchemaViolation { line: usize, detail: String },
    #[error("asset not found: {0}")]
    MissingAsset(String),
    #[error("no answer label found in model output")]
    NoAnswerFound,
    #[error("item `{0}` has no ground-truth answer")]
    MissingGroundTruth(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("i/o: {0}")]
    Io(String),
    #[error(transparent)]
    Canon(#[from] CanonError),
    #[error(transparent)]
    Select(#[from] SelectError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Reflect(#[from] ReflectError),
    #[error(transparent)]
    Notes(#[from] NotesError),
}

#[derive(Debug, Clone)]
pub struct EngineConfig {
    pub frames: u32,
    pub resolution: u32,
    /// Falls back to the embedder's own default when unset.
    pub theta: Option<f64>,
    pub prune: PruneConfig,
    pub max_iters: u32,
    /// Whether unmatched questions may create new task nodes.
    pub expansion: bool,
    pub keywords: KeywordFilter,
    pub traces_dir: Option<PathBuf>,
}

impl EngineConfig {
    pub fn train() -> Self {
        Self {
            frames: DEFAULT_FRAMES,
            resolution: DEFAULT_RESOLUTION,
            theta: None,
            prune: PruneConfig::default(),
            max_iters: DEFAULT_MAX_ITERS,
            expansion: true,
            keywords: KeywordFilter::default(),
            traces_dir: None,
        }
    }

    pub fn eval() -> Self {
        Self { expansion: false, ..Self::train() }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.frames == 0 {
            return bad("frames must be at least 1".into());
        }
        if self.resolution == 0 {
            return bad("resolution must be positive".into());
        }
        if self.max_iters == 0 {
            return bad("max-iters must be at least 1".into());
        }
        if let Some(theta) = self.theta {
            if !(0.0..=1.0).contains(&theta) {
                return bad(format!("theta {theta} outside [0, 1]"));
            }
        }
        PruneConfig::new(self.prune.tau, self.prune.n_min).map_err(|e| HarnessError::Config(e.to_string()))?;
        Ok(())
    }

    fn theta(&self, embedder: &dyn Embedder) -> f64 {
        self.theta.unwrap_or_else(|| embedder.default_theta())
    }
}

/// What gets written to `<traces_dir>/<episode id>.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub episode_id: String,
    pub mode: String,
    pub selection: SelectionResult,
    pub node: Option<String>,
    pub answer: Option<String>,
    pub ground_truth: Option<String>,
    pub correct: Option<bool>,
    pub trace: ReasoningTrace,
}

/// File-system safe episode id.
pub fn episode_file_name(item_id: &str) -> String {
    let safe: String = item_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') { c } else { '_' })
        .collect();
    format!("{safe}.json")
}

pub fn load_episode(traces_dir: &Path, episode_id: &str) -> Result<EpisodeRecord, HarnessError> {
    let path = traces_dir.join(episode_file_name(episode_id));
    let text = std::fs::read_to_string(&path).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))
}

fn dump_episode(dir: &Path, record: &EpisodeRecord) -> Result<(), HarnessError> {
    let io = |e: std::io::Error| HarnessError::Io(format!("{}: {e}", dir.display()));
    std::fs::create_dir_all(dir).map_err(io)?;
    let json = serde_json::to_string_pretty(record).expect("episode serializes");
    std::fs::write(dir.join(episode_file_name(&record.episode_id)), json + "\n").map_err(io)
}

/// The trace's own answer if it is a valid label, otherwise a scan of the
/// final reply.
fn resolve_answer(trace: &ReasoningTrace, labels: &[String]) -> Option<String> {
    match &trace.final_answer {
        Some(a) if labels.contains(a) => Some(a.clone()),
        _ => extract_answer(&trace.final_reply, labels).ok(),
    }
}

fn blank_result(item: &BenchmarkItem) -> ItemResult {
    ItemResult {
        id: item.id.clone(),
        domain: item.domain,
        answer: None,
        correct: None,
        node: None,
        flags: ItemFlags::default(),
        error: None,
    }
}

/// Any error leaves a labelled item scored as incorrect.
fn finish_result(mut result: ItemResult, item: &BenchmarkItem, outcome: Result<(), HarnessError>) -> ItemResult {
    if let Err(e) = outcome {
        tracing::warn!(item = %item.id, error = %e, "item failed");
        result.error = Some(e.to_string());
    }
    if item.answer.is_some() && result.correct.is_none() {
        result.correct = Some(false);
    }
    result
}

struct Run<'a> {
    backend: &'a dyn Backend,
    embedder: &'a dyn Embedder,
    cfg: &'a EngineConfig,
}

impl Run<'_> {
    fn train_item(
        &self,
        kb: &mut KnowledgeBase,
        item: &BenchmarkItem,
        result: &mut ItemResult,
    ) -> Result<(), HarnessError> {
        let ground_truth = item.answer.as_deref().ok_or_else(|| HarnessError::MissingGroundTruth(item.id.clone()))?;
        let input = canonicalize(&item.prompt_text(), &item.raw_assets(), self.cfg.frames, self.cfg.resolution)?;
        let selection = select_task_node(kb, &input, self.embedder, self.cfg.theta(self.embedder))?;
        let mut node = selection.matched_node().map(str::to_string);
        if node.is_none() {
            match discover_node(kb, &input, self.backend, self.cfg.expansion) {
                Ok(Discovery::Created(created)) => {
                    result.flags.discovered_node = true;
                    node = Some(created.name);
                }
                Ok(Discovery::Skipped) => {}
                Err(SelectError::MalformedDiscovery(why)) => {
                    tracing::warn!(item = %item.id, why, "discovery reply unusable; running without a task node");
                }
                Err(e) => return Err(e.into()),
            }
        }
        result.node = node.clone();

        let context = EpisodeContext::from_kb(kb, node.as_deref());
        let trace = run_episode(&input, &context, self.backend, AgentConfig { max_iters: self.cfg.max_iters })?;
        let labels = item.labels();
        let answer = resolve_answer(&trace, &labels);
        result.answer = answer.clone();
        result.correct = Some(answer.as_deref() == Some(ground_truth));
        result.flags.degenerative = trace.degenerative_used;
        result.flags.assumption = trace.assumption_used;
        result.flags.eligible =
            eligibility_for_answer(&trace, answer.as_deref(), ground_truth, &self.cfg.keywords).eligible;

        if let Some(dir) = &self.cfg.traces_dir {
            dump_episode(
                dir,
                &EpisodeRecord {
                    episode_id: item.id.clone(),
                    mode: "train".into(),
                    selection,
                    node: node.clone(),
                    answer: answer.clone(),
                    ground_truth: Some(ground_truth.to_string()),
                    correct: result.correct,
                    trace: trace.clone(),
                },
            )?;
        }

        let conclusion = conclude_training_item(
            kb,
            node.as_deref(),
            &input,
            &trace,
            answer.as_deref(),
            ground_truth,
            self.backend,
            self.cfg.prune,
            &self.cfg.keywords,
        )?;
        result.flags.update = Some(conclusion.update_kind);
        result.flags.pruned = conclusion.pruned;
        Ok(())
    }

    fn eval_item(&self, kb: &KnowledgeBase, item: &BenchmarkItem, result: &mut ItemResult) -> Result<(), HarnessError> {
        let input = canonicalize(&item.prompt_text(), &item.raw_assets(), self.cfg.frames, self.cfg.resolution)?;
        let selection = select_task_node(kb, &input, self.embedder, self.cfg.theta(self.embedder))?;
        let node = selection.matched_node().map(str::to_string);
        result.node = node.clone();
        let context = EpisodeContext::from_kb(kb, node.as_deref());
        let trace = run_episode(&input, &context, self.backend, AgentConfig { max_iters: self.cfg.max_iters })?;
        let answer = resolve_answer(&trace, &item.labels());
        result.answer = answer.clone();
        result.correct = item.answer.as_ref().map(|gt| answer.as_ref() == Some(gt));
        result.flags.degenerative = trace.degenerative_used;
        result.flags.assumption = trace.assumption_used;
        if let Some(dir) = &self.cfg.traces_dir {
            dump_episode(
                dir,
                &EpisodeRecord {
                    episode_id: item.id.clone(),
                    mode: "eval".into(),
                    selection,
                    node,
                    answer: answer.clone(),
                    ground_truth: item.answer.clone(),
                    correct: result.correct,
                    trace,
                },
            )?;
        }
        if answer.is_none() {
            return Err(HarnessError::NoAnswerFound);
        }
        Ok(())
    }
}

fn pruned_names(kb: &mut KnowledgeBase) -> Vec<String> {
    kb.drain_events()
        .into_iter()
        .filter_map(|e| match e {
            KbEvent::NodePruned { name, .. } => Some(name),
            _ => None,
        })
        .collect()
}

/// Knowledge evolution over labelled items, one at a time. When `checkpoint`
/// is given the knowledge base is saved there after every item.
pub fn run_train(
    kb: &mut KnowledgeBase,
    items: &[BenchmarkItem],
    backend: &dyn Backend,
    embedder: &dyn Embedder,
    cfg: &EngineConfig,
    checkpoint: Option<&Path>,
) -> Result<RunReport, HarnessError> {
    cfg.validate()?;
    let run = Run { backend, embedder, cfg };
    kb.drain_events();
    let mut results = Vec::with_capacity(items.len());
    let mut pruned = Vec::new();
    for item in items {
        let mut result = blank_result(item);
        let outcome = run.train_item(kb, item, &mut result);
        results.push(finish_result(result, item, outcome));
        pruned.extend(pruned_names(kb));
        if let Some(path) = checkpoint {
            kb.save(path)?;
        }
    }
    Ok(RunReport::from_items(results, pruned))
}

/// Scores items against a fixed knowledge base with up to `parallelism`
/// concurrent episodes. The knowledge base is never modified.
pub fn run_eval(
    kb: &KnowledgeBase,
    items: &[BenchmarkItem],
    backend: &dyn Backend,
    embedder: &dyn Embedder,
    cfg: &EngineConfig,
    parallelism: usize,
) -> Result<RunReport, HarnessError> {
    cfg.validate()?;
    if cfg.expansion {
        return Err(HarnessError::Config("expansion mode must be off during eval".into()));
    }
    if parallelism == 0 {
        return Err(HarnessError::Config("parallelism must be at least 1".into()));
    }
    let run = Run { backend, embedder, cfg };
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<ItemResult>>> = Mutex::new(vec![None; items.len()]);
    std::thread::scope(|scope| {
        for _ in 0..parallelism.min(items.len().max(1)) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(item) = items.get(i) else { break };
                let mut result = blank_result(item);
                let outcome = run.eval_item(kb, item, &mut result);
                let result = finish_result(result, item, outcome);
                slots.lock().unwrap()[i] = Some(result);
            });
        }
    });
    let results = slots.into_inner().unwrap().into_iter().map(|r| r.expect("every item visited")).collect();
    Ok(RunReport::from_items(results, Vec::new()))
}

/// Folds eval outcomes into node statistics after the fact, in item order.
/// Returns the nodes this pruned.
pub fn apply_eval_stats(
    kb: &mut KnowledgeBase,
    report: &RunReport,
    prune: PruneConfig,
) -> Result<Vec<String>, HarnessError> {
    kb.drain_events();
    for item in &report.per_item {
        if let (Some(node), Some(correct)) = (&item.node, item.correct) {
            if kb.contains(node) {
                kb.record_outcome(node, correct, prune)?;
            }
        }
    }
    Ok(pruned_names(kb))
}
