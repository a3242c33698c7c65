//! The Hypothesis–Evidence–Validation loop.
//!
//! Each iteration makes three backend calls in sequence: a hypothesis turn
//! that proposes an explanation, a candidate answer and `<info>`/`<attention>`
//! queries; an evidence turn whose reply must consist of triadic observation
//! lines; and a validator turn returning a sufficiency verdict. The loop stops
//! on the first sufficient verdict. When the iteration cap is reached without
//! one, a final degenerative turn answers from the gathered facts plus the
//! model's own priors, and the trace is flagged accordingly.

mod parse;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{Attachment, Backend, BackendError, ModelRequest};
use crate::canon::{parse_triadic_observation, CanonicalInput, TriadicObservation};
use crate::notes::KnowledgeBase;
use crate::prompts::{bullet_list, Template};

pub use parse::{final_answer, has_assumption_rationale, parse_agent_turn, parse_verdict, ASSUMPTION_MARKER};

pub const DEFAULT_MAX_ITERS: u32 = 3;

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("hypothesis turn lacks a `Candidate Answer:` line")]
    MissingCandidateAnswer,
    #[error("hypothesis turn contains no <info> or <attention> query")]
    NoQueries,
    #[error("validator reply lacks a `Verdict:` line")]
    MalformedVerdict,
    #[error("degenerative reply lacks a `Final Answer:` line")]
    MissingFinalAnswer { reply: String },
    #[error("max_iters must be at least 1")]
    InvalidConfig,
    #[error(transparent)]
    Backend(#[from] BackendError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hypothesis {
    pub explanation: String,
    pub candidate_answer: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuerySet {
    pub info_queries: Vec<String>,
    pub attention_directives: Vec<String>,
}

impl QuerySet {
    pub fn len(&self) -> usize {
        self.info_queries.len() + self.attention_directives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn render(&self) -> String {
        let info = self.info_queries.iter().map(|q| format!("<info>{q}</info>"));
        let attention = self.attention_directives.iter().map(|q| format!("<attention>{q}</attention>"));
        info.chain(attention).collect::<Vec<_>>().join("\n")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MissingEvidence {
    pub text: String,
    pub unobtainable: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationVerdict {
    pub sufficient: bool,
    pub missing_evidence: Vec<MissingEvidence>,
}

impl ValidationVerdict {
    pub fn insufficient() -> Self {
        Self { sufficient: false, missing_evidence: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub index: u32,
    pub hypothesis: Hypothesis,
    pub queries: QuerySet,
    pub facts: Vec<TriadicObservation>,
    pub verdict: ValidationVerdict,
    pub rejected_fact_lines: Vec<String>,
}

/// Full record of one episode, dumped as JSON per item.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReasoningTrace {
    pub iterations: Vec<IterationRecord>,
    /// `None` when the degenerative reply carried no `Final Answer:` line;
    /// the harness then falls back to scanning `final_reply`.
    pub final_answer: Option<String>,
    pub final_reply: String,
    pub degenerative_used: bool,
    pub assumption_used: bool,
    pub context_node: Option<String>,
    pub general_tips_used: Vec<String>,
}

impl ReasoningTrace {
    pub fn facts(&self) -> impl Iterator<Item = &TriadicObservation> {
        self.iterations.iter().flat_map(|it| it.facts.iter())
    }

    /// Plain-text rendering used in reflection prompts.
    pub fn render(&self) -> String {
        let mut out = render_history(&self.iterations);
        if self.degenerative_used {
            out.push_str("\nDegenerative inference was used.");
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeContext {
    pub name: String,
    pub description: String,
    pub details: Vec<String>,
}

/// Knowledge handed to an episode: general tips plus the selected node.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeContext {
    pub general_tips: Vec<String>,
    pub node: Option<NodeContext>,
}

impl EpisodeContext {
    pub fn from_kb(kb: &KnowledgeBase, node: Option<&str>) -> Self {
        Self {
            general_tips: kb.general_tips().iter().map(|t| t.text.clone()).collect(),
            node: node.and_then(|n| kb.node(n)).map(|n| NodeContext {
                name: n.name.clone(),
                description: n.description.clone(),
                details: n.details.iter().map(|t| t.text.clone()).collect(),
            }),
        }
    }

    pub fn render(&self) -> String {
        let mut out = format!("General tips:\n{}", bullet_list(&self.general_tips));
        match &self.node {
            Some(node) => {
                out.push_str(&format!(
                    "\nTask: {}\n{}\nTask details:\n{}",
                    node.name,
                    node.description,
                    bullet_list(&node.details)
                ));
            }
            None => out.push_str("\nTask: (no matching task category)"),
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AgentConfig {
    pub max_iters: u32,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self { max_iters: DEFAULT_MAX_ITERS }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Evidence {
    pub facts: Vec<TriadicObservation>,
    pub rejected: Vec<String>,
    pub reprompted: bool,
    pub replies: Vec<String>,
}

fn render_facts<'a>(facts: impl IntoIterator<Item = &'a TriadicObservation>) -> String {
    let lines: Vec<String> = facts.into_iter().map(ToString::to_string).collect();
    if lines.is_empty() {
        "(none)".to_string()
    } else {
        lines.join("\n")
    }
}

fn render_history(iterations: &[IterationRecord]) -> String {
    if iterations.is_empty() {
        return "(none)".to_string();
    }
    let mut out = Vec::new();
    for it in iterations {
        out.push(format!("Iteration {}", it.index));
        out.push(format!("Hypothesis: {}", it.hypothesis.explanation));
        out.push(format!("Candidate Answer: {}", it.hypothesis.candidate_answer));
        out.push(format!("Facts:\n{}", render_facts(&it.facts)));
        let verdict = if it.verdict.sufficient { "sufficient" } else { "insufficient" };
        out.push(format!("Verdict: {verdict}"));
        for m in &it.verdict.missing_evidence {
            if m.unobtainable {
                out.push(format!("Missing: {} [unobtainable] (do not request this again)", m.text));
            } else {
                out.push(format!("Missing: {}", m.text));
            }
        }
    }
    out.join("\n")
}

fn with_frames(mut request: ModelRequest, input: &CanonicalInput) -> ModelRequest {
    if let Some(user) = request.messages.last_mut() {
        user.attachments = Attachment::for_input(input);
    }
    request
}

fn parse_fact_lines(reply: &str, input: &CanonicalInput, evidence: &mut Evidence) {
    for line in reply.lines().map(str::trim).filter(|l| !l.is_empty()) {
        match parse_triadic_observation(line, input) {
            Ok(fact) => evidence.facts.push(fact),
            Err(e) => {
                tracing::debug!(line, error = %e, "rejected observation line");
                evidence.rejected.push(line.to_string());
            }
        }
    }
}

/// Runs the queries against the visuals. Malformed or unresolvable lines are
/// rejected; if nothing usable comes back, one re-prompt with a format
/// reminder is issued.
pub fn gather_evidence(
    queries: &QuerySet,
    input: &CanonicalInput,
    backend: &dyn Backend,
) -> Result<Evidence, AgentError> {
    let manifest = input.manifest();
    let rendered = queries.render();
    let request = Template::Gatherer.request(&[("manifest", &manifest), ("queries", &rendered)]);
    let reply = backend.complete(&with_frames(request, input))?.text;

    let mut evidence = Evidence { facts: Vec::new(), rejected: Vec::new(), reprompted: false, replies: vec![] };
    parse_fact_lines(&reply, input, &mut evidence);
    evidence.replies.push(reply);
    if evidence.facts.is_empty() {
        let retry = Template::GathererRetry.request(&[
            ("manifest", &manifest),
            ("queries", &rendered),
            ("previous", &evidence.replies[0]),
        ]);
        let reply = backend.complete(&with_frames(retry, input))?.text;
        parse_fact_lines(&reply, input, &mut evidence);
        evidence.replies.push(reply);
        evidence.reprompted = true;
    }
    Ok(evidence)
}

pub fn validate(
    candidate: &Hypothesis,
    facts: &[TriadicObservation],
    input: &CanonicalInput,
    backend: &dyn Backend,
) -> Result<(ValidationVerdict, String), AgentError> {
    let facts = render_facts(facts);
    let request = Template::Validator.request(&[
        ("question", &input.annotated_question),
        ("explanation", &candidate.explanation),
        ("candidate", &candidate.candidate_answer),
        ("facts", &facts),
    ]);
    let reply = backend.complete(&request)?.text;
    parse_verdict(&reply).map(|v| (v, reply))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DegenerativeOutcome {
    pub answer: String,
    pub assumption_rationale: bool,
    pub reply: String,
}

pub fn degenerative_inference(
    input: &CanonicalInput,
    context: &EpisodeContext,
    iterations: &[IterationRecord],
    backend: &dyn Backend,
) -> Result<DegenerativeOutcome, AgentError> {
    let facts = render_facts(iterations.iter().flat_map(|it| it.facts.iter()));
    let gaps: Vec<String> = iterations
        .iter()
        .flat_map(|it| it.verdict.missing_evidence.iter())
        .map(|m| if m.unobtainable { format!("{} [unobtainable]", m.text) } else { m.text.clone() })
        .collect();
    let notes = context.render();
    let request = Template::Degenerative.request(&[
        ("question", &input.annotated_question),
        ("notes", &notes),
        ("facts", &facts),
        ("gaps", &bullet_list(&gaps)),
    ]);
    let reply = backend.complete(&with_frames(request, input))?.text;
    match final_answer(&reply) {
        Some(answer) => {
            Ok(DegenerativeOutcome { answer, assumption_rationale: has_assumption_rationale(&reply), reply })
        }
        None => Err(AgentError::MissingFinalAnswer { reply }),
    }
}

pub fn run_episode(
    input: &CanonicalInput,
    context: &EpisodeContext,
    backend: &dyn Backend,
    config: AgentConfig,
) -> Result<ReasoningTrace, AgentError> {
    if config.max_iters == 0 {
        return Err(AgentError::InvalidConfig);
    }
    let notes = context.render();
    let mut iterations: Vec<IterationRecord> = Vec::new();
    let mut assumption_used = false;

    for index in 1..=config.max_iters {
        let history = render_history(&iterations);
        let request = Template::Hypothesizer.request(&[
            ("question", &input.annotated_question),
            ("notes", &notes),
            ("history", &history),
        ]);
        let reply = backend.complete(&with_frames(request, input))?.text;
        assumption_used |= has_assumption_rationale(&reply);
        let (hypothesis, queries) = parse_agent_turn(&reply)?;

        let evidence = gather_evidence(&queries, input, backend)?;
        assumption_used |= evidence.replies.iter().any(|r| has_assumption_rationale(r));

        let verdict = match validate(&hypothesis, &evidence.facts, input, backend) {
            Ok((verdict, reply)) => {
                assumption_used |= has_assumption_rationale(&reply);
                verdict
            }
            Err(AgentError::MalformedVerdict) => {
                tracing::warn!(iteration = index, "validator reply had no verdict; treating as insufficient");
                ValidationVerdict::insufficient()
            }
            Err(e) => return Err(e),
        };
        let sufficient = verdict.sufficient;
        iterations.push(IterationRecord {
            index,
            hypothesis,
            queries,
            facts: evidence.facts,
            verdict,
            rejected_fact_lines: evidence.rejected,
        });
        if sufficient {
            let answer = iterations.last().map(|it| it.hypothesis.candidate_answer.clone());
            return Ok(ReasoningTrace {
                iterations,
                final_answer: answer,
                final_reply: reply,
                degenerative_used: false,
                assumption_used,
                context_node: context.node.as_ref().map(|n| n.name.clone()),
                general_tips_used: context.general_tips.clone(),
            });
        }
    }

    let (final_answer, final_reply) = match degenerative_inference(input, context, &iterations, backend) {
        Ok(outcome) => {
            assumption_used |= outcome.assumption_rationale;
            (Some(outcome.answer), outcome.reply)
        }
        Err(AgentError::MissingFinalAnswer { reply }) => {
            assumption_used |= has_assumption_rationale(&reply);
            (None, reply)
        }
        Err(e) => return Err(e),
    };
    Ok(ReasoningTrace {
        iterations,
        final_answer,
        final_reply,
        degenerative_used: true,
        assumption_used,
        context_node: context.node.as_ref().map(|n| n.name.clone()),
        general_tips_used: context.general_tips.clone(),
    })
}
