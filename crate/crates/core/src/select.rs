//! Context selection: rank every task node against the canonicalized input
//! and, when nothing matches and expansion is on, ask the backend to define
//! a new node.

use std::sync::LazyLock;
use std::time::Duration;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::backend::{Backend, BackendError};
use crate::canon::CanonicalInput;
use crate::notes::{KnowledgeBase, NotesError, TaskNode};
use crate::prompts::Template;

pub const DEFAULT_DIMENSION: usize = 384;
/// Match threshold for a sentence-embedding provider.
pub const DEFAULT_THETA_EXTERNAL: f64 = 0.45;
/// Match threshold for the hashed bag-of-words fallback.
pub const DEFAULT_THETA_FALLBACK: f64 = 0.30;

#[derive(Debug, Error)]
pub enum SelectError {
    #[error("embedding provider unavailable: {0}")]
    ProviderUnavailable(String),
    #[error("embedding dimensions differ ({0} vs {1})")]
    DimensionMismatch(usize, usize),
    #[error("discovery reply lacks a fenced name/description block: {0}")]
    MalformedDiscovery(String),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Notes(#[from] NotesError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    /// L2-normalizes `values`; an all-zero vector stays zero.
    pub fn normalized(mut values: Vec<f64>) -> Self {
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            values.iter_mut().for_each(|v| *v /= norm);
        }
        Self(values)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn dimension(&self) -> usize {
        self.0.len()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|v| *v == 0.0)
    }
}

pub fn cosine(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, SelectError> {
    if a.dimension() != b.dimension() {
        return Err(SelectError::DimensionMismatch(a.dimension(), b.dimension()));
    }
    let dot: f64 = a.0.iter().zip(&b.0).map(|(x, y)| x * y).sum();
    let na = a.0.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.0.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Ok(0.0);
    }
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

pub trait Embedder: Send + Sync {
    fn embed(&self, text: &str) -> Result<EmbeddingVector, SelectError>;
    /// Threshold a match must reach with this provider unless configured otherwise.
    fn default_theta(&self) -> f64;
}

/// Lowercased alphanumeric runs.
pub fn tokenize(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()).map(str::to_lowercase)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf29ce484222325u64, |h, b| (h ^ u64::from(*b)).wrapping_mul(0x100000001b3))
}

/// Deterministic fallback: token counts hashed into `dimension` buckets.
#[derive(Debug, Clone, Copy)]
pub struct HashingEmbedder {
    dimension: usize,
}

impl HashingEmbedder {
    pub fn new(dimension: usize) -> Self {
        assert!(dimension > 0, "embedding dimension must be positive");
        Self { dimension }
    }
}

impl Default for HashingEmbedder {
    fn default() -> Self {
        Self::new(DEFAULT_DIMENSION)
    }
}

impl Embedder for HashingEmbedder {
    fn embed(&self, text: &str) -> Result<EmbeddingVector, SelectError> {
        let mut counts = vec![0.0; self.dimension];
        for token in tokenize(text) {
            counts[(fnv1a(token.as_bytes()) % self.dimension as u64) as usize] += 1.0;
        }
        Ok(EmbeddingVector::normalized(counts))
    }

    fn default_theta(&self) -> f64 {
        DEFAULT_THETA_FALLBACK
    }
}

/// Client for an OpenAI-compatible `/v1/embeddings` endpoint serving a
/// sentence-embedding model.
pub struct HttpEmbedder {
    url: String,
    model: String,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
}

impl HttpEmbedder {
    pub fn new(base_url: &str, model: &str, api_key: Option<String>, timeout: Duration) -> Result<Self, SelectError> {
        let base = base_url.trim_end_matches('/');
        let url = if base.ends_with("/v1") { format!("{base}/embeddings") } else { format!("{base}/v1/embeddings") };
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| SelectError::ProviderUnavailable(e.to_string()))?;
        Ok(Self { url, model: model.to_string(), api_key, client })
    }
}

impl Embedder for HttpEmbedder {
    fn embed(&self, text: &str) -> Result<EmbeddingVector, SelectError> {
        let unavailable = |e: String| SelectError::ProviderUnavailable(e);
        let mut req = self.client.post(&self.url).json(&json!({ "model": self.model, "input": text }));
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| unavailable(e.to_string()))?;
        if !resp.status().is_success() {
            return Err(unavailable(format!("HTTP {}", resp.status())));
        }
        let body: Value = resp.json().map_err(|e| unavailable(e.to_string()))?;
        let values = body
            .pointer("/data/0/embedding")
            .and_then(Value::as_array)
            .ok_or_else(|| unavailable("response lacks data[0].embedding".into()))?
            .iter()
            .map(|v| v.as_f64().filter(|x| x.is_finite()))
            .collect::<Option<Vec<f64>>>()
            .ok_or_else(|| unavailable("non-numeric embedding entry".into()))?;
        Ok(EmbeddingVector::normalized(values))
    }

    fn default_theta(&self) -> f64 {
        DEFAULT_THETA_EXTERNAL
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SelectionOutcome {
    Matched { node: String, score: f64 },
    NoMatch { best_score: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub outcome: SelectionOutcome,
    /// Every node, best first; ties ordered by name.
    pub ranking: Vec<(String, f64)>,
}

impl SelectionResult {
    pub fn matched_node(&self) -> Option<&str> {
        match &self.outcome {
            SelectionOutcome::Matched { node, .. } => Some(node),
            SelectionOutcome::NoMatch { .. } => None,
        }
    }
}

pub fn select_task_node(
    kb: &KnowledgeBase,
    input: &CanonicalInput,
    embedder: &dyn Embedder,
    theta: f64,
) -> Result<SelectionResult, SelectError> {
    let query = embedder.embed(&input.annotated_question)?;
    let mut ranking = kb
        .nodes()
        .map(|node| {
            let v = embedder.embed(&node.retrieval_text())?;
            Ok((node.name.clone(), cosine(&query, &v)?))
        })
        .collect::<Result<Vec<_>, SelectError>>()?;
    ranking.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));

    let outcome = match ranking.first() {
        Some((name, score)) if *score >= theta => SelectionOutcome::Matched { node: name.clone(), score: *score },
        Some((_, score)) => SelectionOutcome::NoMatch { best_score: *score },
        None => SelectionOutcome::NoMatch { best_score: 0.0 },
    };
    Ok(SelectionResult { outcome, ranking })
}

#[derive(Debug, Clone, PartialEq)]
pub enum Discovery {
    Created(TaskNode),
    Skipped,
}

static FENCE_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?s)```[^\n]*\n(.*?)```").unwrap());

/// Lowercase, whitespace runs become underscores.
pub fn normalize_node_name(raw: &str) -> String {
    raw.split_whitespace().collect::<Vec<_>>().join("_").to_lowercase()
}

/// Parses the fenced `name:` / `description:` block of a discovery reply.
pub fn parse_discovery(reply: &str) -> Result<(String, String), SelectError> {
    let malformed = |why: &str| SelectError::MalformedDiscovery(why.to_string());
    let block = FENCE_RE.captures(reply).ok_or_else(|| malformed("no fenced block"))?;
    let mut name = None;
    let mut description = None;
    for line in block[1].lines() {
        let line = line.trim();
        if let Some(v) = line.strip_prefix("name:") {
            name = Some(normalize_node_name(v));
        } else if let Some(v) = line.strip_prefix("description:") {
            description = Some(v.trim().to_string());
        }
    }
    match (name, description) {
        (Some(n), Some(d)) if !n.is_empty() && !d.is_empty() => Ok((n, d)),
        _ => Err(malformed("missing or empty name/description")),
    }
}

fn unique_name(kb: &KnowledgeBase, base: &str) -> String {
    if !kb.contains(base) {
        return base.to_string();
    }
    (2..).map(|i| format!("{base}_{i}")).find(|n| !kb.contains(n)).expect("unbounded suffixes")
}

pub fn discover_node(
    kb: &mut KnowledgeBase,
    input: &CanonicalInput,
    backend: &dyn Backend,
    expansion_mode: bool,
) -> Result<Discovery, SelectError> {
    if !expansion_mode {
        return Ok(Discovery::Skipped);
    }
    let nodes = kb.nodes().map(|n| format!("- {}: {}", n.name, n.description)).collect::<Vec<_>>();
    let nodes = if nodes.is_empty() { "(none)".to_string() } else { nodes.join("\n") };
    let request = Template::Discovery.request(&[("nodes", &nodes), ("question", &input.annotated_question)]);
    let reply = backend.complete(&request)?;
    let (name, description) = parse_discovery(&reply.text)?;
    let node = TaskNode::new(unique_name(kb, &name), description);
    kb.add_task_node(node.clone())?;
    Ok(Discovery::Created(node))
}
