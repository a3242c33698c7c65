//! Parsers for the backend reply micro-protocols.

use std::sync::LazyLock;

use regex::Regex;

use super::{AgentError, Hypothesis, MissingEvidence, QuerySet, ValidationVerdict};

pub const ASSUMPTION_MARKER: &str = "Assumption Rationale:";

static INFO_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?s)<info>(.*?)</info>").unwrap());
static ATTENTION_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?s)<attention>(.*?)</attention>").unwrap());
static CANDIDATE_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"Candidate Answer:[ \t]*([^\n]*)").unwrap());
static FINAL_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"Final Answer:[ \t]*([^\n]*)").unwrap());
static VERDICT_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?mi)^[ \t*]*Verdict:[ \t*]*(sufficient|insufficient)\b").unwrap());
static MISSING_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?m)^[ \t]*(?:[-*][ \t]*)?Missing:[ \t]*(.*?)[ \t]*$").unwrap());

const UNOBTAINABLE: &str = "[unobtainable]";

/// First token after a marker, without decoration such as `**D**` or `(D).`.
fn answer_token(rest: &str) -> Option<String> {
    let token = rest
        .split_whitespace()
        .next()?
        .trim_matches(|c: char| matches!(c, '*' | '.' | ',' | ':' | ';' | '(' | ')' | '[' | ']' | '"' | '\'' | '`'));
    (!token.is_empty()).then(|| token.to_string())
}

fn last_marker_value(re: &Regex, text: &str) -> Option<String> {
    re.captures_iter(text).filter_map(|c| answer_token(&c[1])).last()
}

pub fn final_answer(text: &str) -> Option<String> {
    last_marker_value(&FINAL_RE, text)
}

pub fn has_assumption_rationale(text: &str) -> bool {
    text.contains(ASSUMPTION_MARKER)
}

fn spans(re: &Regex, text: &str) -> Vec<String> {
    re.captures_iter(text).map(|c| c[1].trim().to_string()).filter(|s| !s.is_empty()).collect()
}

pub fn parse_agent_turn(reply: &str) -> Result<(Hypothesis, QuerySet), AgentError> {
    let candidate_answer = last_marker_value(&CANDIDATE_RE, reply).ok_or(AgentError::MissingCandidateAnswer)?;
    let queries = QuerySet { info_queries: spans(&INFO_RE, reply), attention_directives: spans(&ATTENTION_RE, reply) };
    if queries.is_empty() {
        return Err(AgentError::NoQueries);
    }
    let prose = INFO_RE.replace_all(reply, "");
    let prose = ATTENTION_RE.replace_all(&prose, "");
    let prose = CANDIDATE_RE.replace_all(&prose, "");
    let explanation = prose.lines().map(str::trim).filter(|l| !l.is_empty()).collect::<Vec<_>>().join("\n");
    let explanation = if explanation.is_empty() { "(no explanation given)".to_string() } else { explanation };
    Ok((Hypothesis { explanation, candidate_answer }, queries))
}

pub fn parse_verdict(reply: &str) -> Result<ValidationVerdict, AgentError> {
    let verdict = VERDICT_RE.captures(reply).ok_or(AgentError::MalformedVerdict)?;
    let sufficient = verdict[1].eq_ignore_ascii_case("sufficient");
    let missing: Vec<MissingEvidence> = MISSING_RE
        .captures_iter(reply)
        .filter_map(|c| {
            let body = c[1].trim();
            let (text, unobtainable) = match body.strip_suffix(UNOBTAINABLE) {
                Some(t) => (t.trim(), true),
                None => (body, false),
            };
            (!text.is_empty()).then(|| MissingEvidence { text: text.to_string(), unobtainable })
        })
        .collect();
    if sufficient && !missing.is_empty() {
        tracing::warn!(dropped = missing.len(), "validator said sufficient but listed missing evidence; dropping it");
        return Ok(ValidationVerdict { sufficient: true, missing_evidence: Vec::new() });
    }
    Ok(ValidationVerdict { sufficient, missing_evidence: missing })
}
