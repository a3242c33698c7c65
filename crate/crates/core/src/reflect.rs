//! Update eligibility and the two reflection paths.
//!
//! A trace may be consolidated into the notes only when it is correct, did not
//! fall back to degenerative inference, used no heuristic assumption, and its
//! facts mention at least one physical operator. Failed items with a known
//! answer instead go through tip discovery.

use std::collections::BTreeSet;
use std::path::Path;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::ReasoningTrace;
use crate::backend::{Backend, BackendError};
use crate::canon::{CanonicalInput, TriadicObservation};
use crate::notes::{KnowledgeBase, NotesError, PruneConfig, Tip, TipOrigin, TipTarget};
use crate::prompts::{bullet_list, Template};

pub const KEYWORD_COUNT: usize = 15;

pub const DEFAULT_PRIMITIVES: [&str; KEYWORD_COUNT] = [
    "trajectory",
    "collision",
    "contact",
    "velocity",
    "acceleration",
    "friction",
    "gravity",
    "mass",
    "momentum",
    "force",
    "rotation",
    "deformation",
    "occlusion",
    "shadow",
    "support",
];

/// Tip Discovery appends at most this many tips per failure.
pub const MAX_DISCOVERED_TIPS: usize = 2;

#[derive(Debug, Error)]
pub enum ReflectError {
    #[error("keyword filter needs exactly {KEYWORD_COUNT} distinct lowercase keywords, got {0}")]
    BadKeywordCount(usize),
    #[error("invalid keyword `{0}`")]
    BadKeyword(String),
    #[error("reading keyword file: {0}")]
    Io(#[from] std::io::Error),
    #[error("reflection reply contained no tip lines")]
    NoTipsExtracted,
    #[error("reflective update requested for an ineligible trace")]
    NotEligible,
    #[error(transparent)]
    Notes(#[from] NotesError),
    #[error(transparent)]
    Backend(#[from] BackendError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeywordFilter {
    primitives: BTreeSet<String>,
}

impl Default for KeywordFilter {
    fn default() -> Self {
        Self { primitives: DEFAULT_PRIMITIVES.iter().map(|s| s.to_string()).collect() }
    }
}

impl KeywordFilter {
    pub fn new<I, S>(keywords: I) -> Result<Self, ReflectError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut primitives = BTreeSet::new();
        let mut n = 0;
        for k in keywords {
            let k: String = k.into();
            n += 1;
            if k.is_empty() || k != k.to_lowercase() || !k.chars().all(char::is_alphanumeric) {
                return Err(ReflectError::BadKeyword(k));
            }
            primitives.insert(k);
        }
        if n != KEYWORD_COUNT || primitives.len() != KEYWORD_COUNT {
            return Err(ReflectError::BadKeywordCount(primitives.len().min(n)));
        }
        Ok(Self { primitives })
    }

    /// One keyword per line; blank lines and `#` comments are ignored.
    pub fn load(path: &Path) -> Result<Self, ReflectError> {
        let text = std::fs::read_to_string(path)?;
        Self::new(text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')).map(String::from))
    }

    pub fn primitives(&self) -> impl Iterator<Item = &str> {
        self.primitives.iter().map(String::as_str)
    }

    pub fn matches_token(&self, token: &str) -> bool {
        let token_stem = stem(token);
        self.primitives.iter().any(|p| stem(p) == token_stem)
    }
}

/// Strips the first matching suffix of `s`, `es`, `ing`, `ed`.
pub fn stem(token: &str) -> &str {
    for suffix in ["s", "es", "ing", "ed"] {
        if token.len() > suffix.len() {
            if let Some(base) = token.strip_suffix(suffix) {
                return base;
            }
        }
    }
    token
}

pub fn physical_operator_present(facts: &[TriadicObservation], filter: &KeywordFilter) -> bool {
    facts_mention_operator(facts.iter(), filter)
}

fn facts_mention_operator<'a>(mut facts: impl Iterator<Item = &'a TriadicObservation>, filter: &KeywordFilter) -> bool {
    facts.any(|fact| {
        fact.description
            .split(|c: char| !c.is_alphanumeric())
            .filter(|t| !t.is_empty())
            .any(|t| filter.matches_token(&t.to_lowercase()))
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EligibilityReport {
    pub c: bool,
    pub f: bool,
    pub a: bool,
    pub d: bool,
    pub eligible: bool,
}

impl EligibilityReport {
    pub fn from_flags(c: bool, f: bool, a: bool, d: bool) -> Self {
        Self { c, f, a, d, eligible: c && !f && !a && d }
    }
}

pub fn eligibility(trace: &ReasoningTrace, ground_truth: &str, filter: &KeywordFilter) -> EligibilityReport {
    eligibility_for_answer(trace, trace.final_answer.as_deref(), ground_truth, filter)
}

/// As [`eligibility`], with the answer resolved by the caller (e.g. through
/// answer extraction when the trace carries none).
pub fn eligibility_for_answer(
    trace: &ReasoningTrace,
    answer: Option<&str>,
    ground_truth: &str,
    filter: &KeywordFilter,
) -> EligibilityReport {
    EligibilityReport::from_flags(
        answer == Some(ground_truth),
        trace.degenerative_used,
        trace.assumption_used,
        facts_mention_operator(trace.facts(), filter),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TipKind {
    Detail,
    General,
}

static TIP_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?m)^[ \t]*(?:[-*][ \t]*)?Tip\[(detail|general)\]:[ \t]*(.*?)[ \t]*$").unwrap());

pub fn parse_tips(reply: &str) -> Vec<(TipKind, String)> {
    TIP_RE
        .captures_iter(reply)
        .filter(|c| !c[2].is_empty())
        .map(|c| {
            let kind = if &c[1] == "detail" { TipKind::Detail } else { TipKind::General };
            (kind, c[2].to_string())
        })
        .collect()
}

fn node_vars(kb: &KnowledgeBase, node_name: &str) -> Result<(String, Vec<String>), ReflectError> {
    let node = kb.node(node_name).ok_or_else(|| NotesError::UnknownNode(node_name.to_string()))?;
    Ok((node.description.clone(), node.details.iter().map(|t| t.text.clone()).collect()))
}

/// Success path: distil principles from an eligible trace into the node's
/// details and the general tips.
pub fn reflective_update(
    kb: &mut KnowledgeBase,
    node_name: &str,
    input: &CanonicalInput,
    trace: &ReasoningTrace,
    report: &EligibilityReport,
    backend: &dyn Backend,
) -> Result<Vec<Tip>, ReflectError> {
    if !report.eligible {
        return Err(ReflectError::NotEligible);
    }
    let (description, _) = node_vars(kb, node_name)?;
    let answer = trace.final_answer.clone().unwrap_or_default();
    let request = Template::Reflection.request(&[
        ("node", node_name),
        ("description", &description),
        ("question", &input.annotated_question),
        ("trace", &trace.render()),
        ("answer", &answer),
    ]);
    let reply = backend.complete(&request)?.text;
    let tips = parse_tips(&reply);
    if tips.is_empty() {
        return Err(ReflectError::NoTipsExtracted);
    }
    let mut appended = Vec::with_capacity(tips.len());
    for (kind, text) in tips {
        let target = match kind {
            TipKind::Detail => TipTarget::Node(node_name),
            TipKind::General => TipTarget::General,
        };
        appended.push(kb.append_tip(target, text, TipOrigin::Reflection)?);
    }
    Ok(appended)
}

/// Failure path: ask for one or two observable cues given the correct answer.
pub fn tip_discovery(
    kb: &mut KnowledgeBase,
    node_name: &str,
    input: &CanonicalInput,
    trace: &ReasoningTrace,
    wrong_answer: &str,
    ground_truth: &str,
    backend: &dyn Backend,
) -> Result<Vec<Tip>, ReflectError> {
    let (description, details) = node_vars(kb, node_name)?;
    let request = Template::TipDiscovery.request(&[
        ("node", node_name),
        ("description", &description),
        ("details", &bullet_list(&details)),
        ("question", &input.annotated_question),
        ("trace", &trace.render()),
        ("answer", wrong_answer),
        ("ground_truth", ground_truth),
    ]);
    let reply = backend.complete(&request)?.text;
    let tips: Vec<String> = parse_tips(&reply)
        .into_iter()
        .filter(|(kind, _)| *kind == TipKind::Detail)
        .map(|(_, text)| text)
        .take(MAX_DISCOVERED_TIPS)
        .collect();
    if tips.is_empty() {
        return Err(ReflectError::NoTipsExtracted);
    }
    tips.into_iter()
        .map(|t| kb.append_tip(TipTarget::Node(node_name), t, TipOrigin::TipDiscovery).map_err(Into::into))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateKind {
    Reflective,
    TipDiscovery,
    None,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemConclusion {
    pub outcome_recorded: bool,
    pub correct: bool,
    pub update_kind: UpdateKind,
    pub pruned: bool,
    pub eligibility: EligibilityReport,
    pub tips: Vec<Tip>,
}

/// Closes a training item: records the outcome on the node (pruning eagerly),
/// then runs whichever reflection path applies. A node pruned by this very
/// outcome receives no tips.
#[allow(clippy::too_many_arguments)]
pub fn conclude_training_item(
    kb: &mut KnowledgeBase,
    node_name: Option<&str>,
    input: &CanonicalInput,
    trace: &ReasoningTrace,
    answer: Option<&str>,
    ground_truth: &str,
    backend: &dyn Backend,
    cfg: PruneConfig,
    filter: &KeywordFilter,
) -> Result<ItemConclusion, ReflectError> {
    let report = eligibility_for_answer(trace, answer, ground_truth, filter);
    let mut conclusion = ItemConclusion {
        outcome_recorded: false,
        correct: report.c,
        update_kind: UpdateKind::None,
        pruned: false,
        eligibility: report,
        tips: Vec::new(),
    };
    let Some(node) = node_name else {
        return Ok(conclusion);
    };
    let outcome = kb.record_outcome(node, report.c, cfg)?;
    conclusion.outcome_recorded = true;
    if outcome.pruned {
        conclusion.pruned = true;
        return Ok(conclusion);
    }
    if report.eligible {
        conclusion.tips = reflective_update(kb, node, input, trace, &report, backend)?;
        conclusion.update_kind = UpdateKind::Reflective;
    } else if !report.c {
        let wrong = answer.unwrap_or("(none)");
        conclusion.tips = tip_discovery(kb, node, input, trace, wrong, ground_truth, backend)?;
        conclusion.update_kind = UpdateKind::TipDiscovery;
    }
    Ok(conclusion)
}
