//! Knowledge notes: general tips, task nodes with descriptions and details,
//! per-node outcome statistics, error-rate pruning and JSON persistence.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Version written into every saved document.
pub const FORMAT_VERSION: u64 = 1;

#[derive(Debug, Error)]
pub enum NotesError {
    #[error("unknown task node `{0}`")]
    UnknownNode(String),
    #[error("task node `{0}` already exists")]
    DuplicateNode(String),
    #[error("tip text is empty")]
    EmptyTip,
    #[error("invalid task node: {0}")]
    InvalidNode(String),
    #[error("invalid prune config: {0}")]
    InvalidConfig(String),
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
    #[error("schema violation: {0}")]
    SchemaViolation(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TipOrigin {
    Seed,
    Reflection,
    TipDiscovery,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tip {
    pub text: String,
    pub origin: TipOrigin,
    pub sequence: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeStats {
    pub n_plus: u64,
    pub n_minus: u64,
}

impl NodeStats {
    pub fn new(n_plus: u64, n_minus: u64) -> Self {
        Self { n_plus, n_minus }
    }

    pub fn activations(&self) -> u64 {
        self.n_plus + self.n_minus
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskNode {
    pub name: String,
    pub description: String,
    pub details: Vec<Tip>,
    pub stats: NodeStats,
}

impl TaskNode {
    pub fn new(name: impl Into<String>, description: impl Into<String>) -> Self {
        Self { name: name.into(), description: description.into(), details: Vec::new(), stats: NodeStats::default() }
    }

    /// Text used to embed this node for retrieval.
    pub fn retrieval_text(&self) -> String {
        let mut text = format!("{}\n{}", self.name, self.description);
        for tip in &self.details {
            text.push('\n');
            text.push_str(&tip.text);
        }
        text
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PruneConfig {
    pub tau: f64,
    pub n_min: u64,
}

impl Default for PruneConfig {
    fn default() -> Self {
        Self { tau: 0.7, n_min: 8 }
    }
}

impl PruneConfig {
    pub fn new(tau: f64, n_min: u64) -> Result<Self, NotesError> {
        if !(tau > 0.0 && tau < 1.0) {
            return Err(NotesError::InvalidConfig(format!("tau must lie in (0, 1), got {tau}")));
        }
        if n_min == 0 {
            return Err(NotesError::InvalidConfig("n_min must be at least 1".into()));
        }
        Ok(Self { tau, n_min })
    }
}

/// Fraction of incorrect outcomes; zero for a node never consulted.
pub fn error_rate(stats: NodeStats) -> f64 {
    match stats.activations() {
        0 => 0.0,
        total => stats.n_minus as f64 / total as f64,
    }
}

pub fn prune_eligible(stats: NodeStats, cfg: PruneConfig) -> bool {
    stats.activations() >= cfg.n_min && error_rate(stats) > cfg.tau
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OutcomeReport {
    pub new_stats: NodeStats,
    pub pruned: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TipTarget<'a> {
    General,
    Node(&'a str),
}

/// Structural changes worth surfacing to a run report or log.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum KbEvent {
    NodeAdded { name: String },
    NodeRecreated { name: String },
    NodePruned { name: String, stats: NodeStats },
}

/// The three-tier note store. Mutations bump `revision`.
#[derive(Debug, Clone, Default)]
pub struct KnowledgeBase {
    pub(crate) general_tips: Vec<Tip>,
    pub(crate) task_nodes: BTreeMap<String, TaskNode>,
    pub(crate) revision: u64,
    retired: BTreeSet<String>,
    events: Vec<KbEvent>,
}

impl PartialEq for KnowledgeBase {
    fn eq(&self, other: &Self) -> bool {
        self.revision == other.revision
            && self.general_tips == other.general_tips
            && self.task_nodes == other.task_nodes
    }
}

fn next_sequence(tips: &[Tip]) -> u64 {
    tips.last().map_or(0, |t| t.sequence + 1)
}

impl KnowledgeBase {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn revision(&self) -> u64 {
        self.revision
    }

    pub fn general_tips(&self) -> &[Tip] {
        &self.general_tips
    }

    pub fn node(&self, name: &str) -> Option<&TaskNode> {
        self.task_nodes.get(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.task_nodes.contains_key(name)
    }

    /// Nodes in name order.
    pub fn nodes(&self) -> impl Iterator<Item = &TaskNode> {
        self.task_nodes.values()
    }

    pub fn node_count(&self) -> usize {
        self.task_nodes.len()
    }

    /// Names of nodes removed by pruning during the lifetime of this value.
    pub fn retired_names(&self) -> &BTreeSet<String> {
        &self.retired
    }

    pub fn drain_events(&mut self) -> Vec<KbEvent> {
        std::mem::take(&mut self.events)
    }

    pub fn add_task_node(&mut self, node: TaskNode) -> Result<(), NotesError> {
        if node.name.trim().is_empty() {
            return Err(NotesError::InvalidNode("name is empty".into()));
        }
        if node.description.trim().is_empty() {
            return Err(NotesError::InvalidNode(format!("`{}` has an empty description", node.name)));
        }
        if self.task_nodes.contains_key(&node.name) {
            return Err(NotesError::DuplicateNode(node.name));
        }
        check_sequences(&node.details).map_err(NotesError::InvalidNode)?;
        let name = node.name.clone();
        self.task_nodes.insert(name.clone(), node);
        self.revision += 1;
        if self.retired.contains(&name) {
            tracing::info!(node = %name, "re-creating previously pruned task node");
            self.events.push(KbEvent::NodeRecreated { name });
        } else {
            self.events.push(KbEvent::NodeAdded { name });
        }
        Ok(())
    }

    pub fn append_tip(
        &mut self,
        target: TipTarget<'_>,
        text: impl Into<String>,
        origin: TipOrigin,
    ) -> Result<Tip, NotesError> {
        let text = text.into().trim().to_string();
        if text.is_empty() {
            return Err(NotesError::EmptyTip);
        }
        let tips = match target {
            TipTarget::General => &mut self.general_tips,
            TipTarget::Node(name) => {
                &mut self.task_nodes.get_mut(name).ok_or_else(|| NotesError::UnknownNode(name.to_string()))?.details
            }
        };
        let tip = Tip { text, origin, sequence: next_sequence(tips) };
        tips.push(tip.clone());
        self.revision += 1;
        Ok(tip)
    }

    /// Counts one outcome on `node_name`, then purges the node if it now
    /// satisfies [`prune_eligible`].
    pub fn record_outcome(
        &mut self,
        node_name: &str,
        correct: bool,
        cfg: PruneConfig,
    ) -> Result<OutcomeReport, NotesError> {
        let node = self.task_nodes.get_mut(node_name).ok_or_else(|| NotesError::UnknownNode(node_name.to_string()))?;
        if correct {
            node.stats.n_plus += 1;
        } else {
            node.stats.n_minus += 1;
        }
        let new_stats = node.stats;
        self.revision += 1;
        let pruned = prune_eligible(new_stats, cfg);
        if pruned {
            self.remove_pruned(node_name, new_stats);
        }
        Ok(OutcomeReport { new_stats, pruned })
    }

    /// Removes every node that is prune-eligible under `cfg`, e.g. after the
    /// threshold was tightened. Returns the removed names.
    pub fn prune_sweep(&mut self, cfg: PruneConfig) -> Vec<String> {
        let doomed: Vec<(String, NodeStats)> = self
            .task_nodes
            .values()
            .filter(|n| prune_eligible(n.stats, cfg))
            .map(|n| (n.name.clone(), n.stats))
            .collect();
        for (name, stats) in &doomed {
            self.remove_pruned(name, *stats);
            self.revision += 1;
        }
        doomed.into_iter().map(|(name, _)| name).collect()
    }

    fn remove_pruned(&mut self, name: &str, stats: NodeStats) {
        self.task_nodes.remove(name);
        self.retired.insert(name.to_string());
        tracing::info!(node = %name, n_plus = stats.n_plus, n_minus = stats.n_minus, "pruned task node");
        self.events.push(KbEvent::NodePruned { name: name.to_string(), stats });
    }

    pub fn to_json(&self) -> String {
        let doc = KbDocument::from(self);
        let mut s = serde_json::to_string_pretty(&doc).expect("knowledge base serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, NotesError> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| NotesError::SchemaViolation(e.to_string()))?;
        let obj = value.as_object().ok_or_else(|| NotesError::SchemaViolation("top level is not an object".into()))?;
        for key in ["version", "revision", "general_tips", "task_nodes"] {
            if !obj.contains_key(key) {
                return Err(NotesError::SchemaViolation(format!("missing key `{key}`")));
            }
        }
        let doc: KbDocument = serde_json::from_value(value).map_err(|e| NotesError::SchemaViolation(e.to_string()))?;
        doc.try_into()
    }

    /// Writes the document atomically (temp file + rename).
    pub fn save(&self, path: &Path) -> Result<(), NotesError> {
        let tmp = path.with_extension("json.tmp");
        {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(self.to_json().as_bytes())?;
            f.sync_all()?;
        }
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, NotesError> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

fn check_sequences(tips: &[Tip]) -> Result<(), String> {
    for pair in tips.windows(2) {
        if pair[1].sequence <= pair[0].sequence {
            return Err(format!(
                "tip sequences not strictly increasing ({} then {})",
                pair[0].sequence, pair[1].sequence
            ));
        }
    }
    if let Some(t) = tips.iter().find(|t| t.text.trim().is_empty()) {
        return Err(format!("tip {} has empty text", t.sequence));
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct KbDocument {
    version: u64,
    revision: u64,
    general_tips: Vec<Tip>,
    task_nodes: BTreeMap<String, NodeDocument>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NodeDocument {
    description: String,
    details: Vec<Tip>,
    stats: NodeStats,
}

impl From<&KnowledgeBase> for KbDocument {
    fn from(kb: &KnowledgeBase) -> Self {
        KbDocument {
            version: FORMAT_VERSION,
            revision: kb.revision,
            general_tips: kb.general_tips.clone(),
            task_nodes: kb
                .task_nodes
                .iter()
                .map(|(name, node)| {
                    (
                        name.clone(),
                        NodeDocument {
                            description: node.description.clone(),
                            details: node.details.clone(),
                            stats: node.stats,
                        },
                    )
                })
                .collect(),
        }
    }
}

impl TryFrom<KbDocument> for KnowledgeBase {
    type Error = NotesError;

    fn try_from(doc: KbDocument) -> Result<Self, NotesError> {
        if doc.version == 0 || doc.version > FORMAT_VERSION {
            return Err(NotesError::SchemaViolation(format!("unsupported version {}", doc.version)));
        }
        check_sequences(&doc.general_tips).map_err(|e| NotesError::SchemaViolation(format!("general_tips: {e}")))?;
        let mut task_nodes = BTreeMap::new();
        for (name, node) in doc.task_nodes {
            if name.trim().is_empty() || node.description.trim().is_empty() {
                return Err(NotesError::SchemaViolation(format!(
                    "task node `{name}` has an empty name or description"
                )));
            }
            check_sequences(&node.details)
                .map_err(|e| NotesError::SchemaViolation(format!("task node `{name}`: {e}")))?;
            task_nodes.insert(
                name.clone(),
                TaskNode { name, description: node.description, details: node.details, stats: node.stats },
            );
        }
        Ok(KnowledgeBase { general_tips: doc.general_tips, task_nodes, revision: doc.revision, ..Default::default() })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kb_with(name: &str, stats: NodeStats) -> KnowledgeBase {
        let mut kb = KnowledgeBase::new();
        let mut node = TaskNode::new(name, "some task");
        node.stats = stats;
        kb.add_task_node(node).unwrap();
        kb
    }

    #[test]
    fn error_rate_examples() {
        assert_eq!(error_rate(NodeStats::new(3, 7)), 0.7);
        assert_eq!(error_rate(NodeStats::new(0, 0)), 0.0);
        assert_eq!(error_rate(NodeStats::new(8, 0)), 0.0);
    }

    #[test]
    fn prune_eligible_examples() {
        let cfg = PruneConfig::default();
        assert!(prune_eligible(NodeStats::new(2, 6), cfg));
        assert!(!prune_eligible(NodeStats::new(0, 7), cfg));
        assert!(!prune_eligible(NodeStats::new(3, 7), cfg));
    }

    #[test]
    fn prune_config_validation() {
        assert!(PruneConfig::new(1.5, 8).is_err());
        assert!(PruneConfig::new(0.0, 8).is_err());
        assert!(PruneConfig::new(0.7, 0).is_err());
        assert_eq!(PruneConfig::new(0.7, 8).unwrap(), PruneConfig::default());
    }

    #[test]
    fn record_outcome_prunes_at_threshold() {
        let mut kb = kb_with("rolling", NodeStats::new(1, 6));
        let rev = kb.revision();
        let report = kb.record_outcome("rolling", false, PruneConfig::default()).unwrap();
        assert_eq!(report.new_stats, NodeStats::new(1, 7));
        assert!(report.pruned);
        assert!(!kb.contains("rolling"));
        assert!(kb.revision() > rev);
        assert!(kb.retired_names().contains("rolling"));
    }

    #[test]
    fn record_outcome_keeps_healthy_node() {
        let mut kb = kb_with("rolling", NodeStats::new(5, 1));
        let report = kb.record_outcome("rolling", true, PruneConfig::default()).unwrap();
        assert_eq!(report, OutcomeReport { new_stats: NodeStats::new(6, 1), pruned: false });
        assert!(kb.contains("rolling"));
    }

    #[test]
    fn record_outcome_unknown_node() {
        let mut kb = KnowledgeBase::new();
        assert!(matches!(kb.record_outcome("missing", true, PruneConfig::default()), Err(NotesError::UnknownNode(_))));
    }

    #[test]
    fn duplicate_node_rejected() {
        let mut kb = KnowledgeBase::new();
        kb.add_task_node(TaskNode::new("free_fall", "objects dropped from rest")).unwrap();
        assert!(matches!(kb.add_task_node(TaskNode::new("free_fall", "again")), Err(NotesError::DuplicateNode(_))));
    }

    #[test]
    fn tips_get_sequences() {
        let mut kb = KnowledgeBase::new();
        let tip = kb.append_tip(TipTarget::General, "look at shadows", TipOrigin::Seed).unwrap();
        assert_eq!(tip.sequence, 0);
        assert_eq!(kb.general_tips().len(), 1);

        kb.add_task_node(TaskNode::new("rolling_plasticity", "compare deformation")).unwrap();
        let a = kb.append_tip(TipTarget::Node("rolling_plasticity"), "one", TipOrigin::Reflection).unwrap();
        let b = kb.append_tip(TipTarget::Node("rolling_plasticity"), "two", TipOrigin::TipDiscovery).unwrap();
        assert!(b.sequence > a.sequence);
        assert_eq!(kb.node("rolling_plasticity").unwrap().details.len(), 2);

        assert!(matches!(
            kb.append_tip(TipTarget::Node("nope"), "x", TipOrigin::Seed),
            Err(NotesError::UnknownNode(_))
        ));
        assert!(matches!(kb.append_tip(TipTarget::General, "  ", TipOrigin::Seed), Err(NotesError::EmptyTip)));
    }

    #[test]
    fn recreation_is_logged() {
        let mut kb = kb_with("spin", NodeStats::new(0, 7));
        kb.record_outcome("spin", false, PruneConfig::default()).unwrap();
        kb.drain_events();
        kb.add_task_node(TaskNode::new("spin", "rotation tasks")).unwrap();
        assert_eq!(kb.drain_events(), vec![KbEvent::NodeRecreated { name: "spin".into() }]);
        assert_eq!(kb.node("spin").unwrap().stats, NodeStats::default());
    }

    #[test]
    fn roundtrip_empty_and_populated() {
        let kb = KnowledgeBase::new();
        assert_eq!(KnowledgeBase::from_json(&kb.to_json()).unwrap(), kb);

        let mut kb = KnowledgeBase::new();
        for t in ["a", "b", "c"] {
            kb.append_tip(TipTarget::General, t, TipOrigin::Reflection).unwrap();
        }
        kb.add_task_node(TaskNode::new("collision", "two bodies meet")).unwrap();
        kb.add_task_node(TaskNode::new("friction", "sliding on ramps")).unwrap();
        kb.append_tip(TipTarget::Node("friction"), "watch the stop point", TipOrigin::TipDiscovery).unwrap();
        kb.record_outcome("collision", true, PruneConfig::default()).unwrap();
        kb.record_outcome("friction", false, PruneConfig::default()).unwrap();

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("kb.json");
        kb.save(&path).unwrap();
        let loaded = KnowledgeBase::load(&path).unwrap();
        assert_eq!(loaded, kb);
        assert_eq!(loaded.node("collision").unwrap().stats, NodeStats::new(1, 0));
        assert_eq!(loaded.general_tips()[2].text, "c");
    }

    #[test]
    fn schema_violations() {
        let missing = r#"{"version":1,"revision":0,"general_tips":[]}"#;
        assert!(matches!(KnowledgeBase::from_json(missing), Err(NotesError::SchemaViolation(_))));
        let future = r#"{"version":99,"revision":0,"general_tips":[],"task_nodes":{}}"#;
        assert!(matches!(KnowledgeBase::from_json(future), Err(NotesError::SchemaViolation(_))));
        let bad_origin = r#"{"version":1,"revision":0,"general_tips":[{"text":"x","origin":"oracle","sequence":0}],"task_nodes":{}}"#;
        assert!(matches!(KnowledgeBase::from_json(bad_origin), Err(NotesError::SchemaViolation(_))));
        assert!(matches!(KnowledgeBase::from_json("not json"), Err(NotesError::SchemaViolation(_))));
    }

    #[test]
    fn document_keys_are_exact() {
        let mut kb = KnowledgeBase::new();
        kb.add_task_node(TaskNode::new("n", "d")).unwrap();
        let v: serde_json::Value = serde_json::from_str(&kb.to_json()).unwrap();
        let keys: Vec<_> = v.as_object().unwrap().keys().cloned().collect();
        assert_eq!(keys, ["general_tips", "revision", "task_nodes", "version"]);
        let node = &v["task_nodes"]["n"];
        assert!(node["details"].is_array());
        assert_eq!(node["stats"]["n_plus"], 0);
        assert_eq!(node["stats"]["n_minus"], 0);
    }

    #[test]
    fn sweep_applies_tightened_threshold() {
        let mut kb = kb_with("a", NodeStats::new(4, 6));
        assert!(kb.prune_sweep(PruneConfig::default()).is_empty());
        let strict = PruneConfig::new(0.5, 8).unwrap();
        assert_eq!(kb.prune_sweep(strict), vec!["a".to_string()]);
        assert_eq!(kb.node_count(), 0);
    }
}
