//! Answer extraction from free-form model text.

use std::sync::LazyLock;

use regex::Regex;

use super::HarnessError;

static TIERS: LazyLock<[Regex; 3]> = LazyLock::new(|| {
    ["Final Answer:", "Extract Answer:", "Candidate Answer:"]
        .map(|marker| Regex::new(&format!(r"{marker}[ \t]*([^\n]*)")).unwrap())
});

fn clean(token: &str) -> &str {
    token.trim_matches(|c: char| !c.is_alphanumeric())
}

/// Marker tiers first (`Final Answer:`, `Extract Answer:`, `Candidate Answer:`),
/// then the last standalone label anywhere. Within a tier the last valid
/// occurrence wins.
pub fn extract_answer(text: &str, labels: &[String]) -> Result<String, HarnessError> {
    let valid = |t: &str| labels.iter().any(|l| l == t);
    for re in TIERS.iter() {
        let hit = re
            .captures_iter(text)
            .filter_map(|c| c[1].split_whitespace().next().map(clean).map(str::to_string))
            .filter(|t| valid(t))
            .last();
        if let Some(answer) = hit {
            return Ok(answer);
        }
    }
    text.rsplit(|c: char| !c.is_alphanumeric())
        .find(|t| valid(t))
        .map(str::to_string)
        .ok_or(HarnessError::NoAnswerFound)
}
