//! JSONL benchmark items.
//!
//! One object per line:
//! `{"id", "question", "choices": [..], "assets": [{"kind", "path", "frames"?}], "domain", "answer"?, "split"}`.
//! Asset paths are resolved against the items file's directory.

use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::canon::{MediaKind, RawAsset};

/// The four benchmark domains: dynamics, relationships, scene, properties.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Domain {
    S1,
    S2,
    S3,
    S4,
}

impl Domain {
    pub const ALL: [Domain; 4] = [Domain::S1, Domain::S2, Domain::S3, Domain::S4];
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    #[serde(alias = "Train")]
    Train,
    #[serde(alias = "Val")]
    Val,
    #[serde(alias = "Test")]
    Test,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemAsset {
    pub kind: MediaKind,
    /// Absolute or resolved path.
    pub path: PathBuf,
    /// Frame count for video files; frame directories are counted instead.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frames: Option<u32>,
}

impl ItemAsset {
    pub fn to_raw(&self) -> RawAsset {
        RawAsset { kind: self.kind, locator: self.path.to_string_lossy().into_owned(), frame_count: self.frames }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Choice {
    pub label: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchmarkItem {
    pub id: String,
    pub question: String,
    pub choices: Vec<Choice>,
    pub assets: Vec<ItemAsset>,
    pub domain: Domain,
    pub answer: Option<String>,
    pub split: Split,
}

impl BenchmarkItem {
    pub fn labels(&self) -> Vec<String> {
        self.choices.iter().map(|c| c.label.clone()).collect()
    }

    /// Question followed by one `X. text` line per choice.
    pub fn prompt_text(&self) -> String {
        let mut out = self.question.trim_end().to_string();
        for c in &self.choices {
            out.push_str(&format!("\n{}. {}", c.label, c.text));
        }
        out
    }

    pub fn raw_assets(&self) -> Vec<RawAsset> {
        self.assets.iter().map(ItemAsset::to_raw).collect()
    }
}

/// Adapter for foreign benchmark formats: map one source record to an item.
/// Implementations live with whoever holds the source data.
pub trait ItemConverter {
    type Record;
    fn convert(&self, record: Self::Record) -> Result<BenchmarkItem, HarnessError>;
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawItem {
    id: String,
    question: String,
    choices: Vec<String>,
    assets: Vec<RawItemAsset>,
    domain: Domain,
    #[serde(default)]
    answer: Option<String>,
    split: Split,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawItemAsset {
    kind: MediaKind,
    path: String,
    #[serde(default)]
    frames: Option<u32>,
}

fn label(i: usize) -> String {
    char::from(b'A' + i as u8).to_string()
}

/// Drops a redundant `A. ` / `A) ` prefix matching the positional label.
fn strip_label(text: &str, label: &str) -> String {
    let t = text.trim();
    for sep in [". ", ") ", ": "] {
        if let Some(rest) = t.strip_prefix(&format!("{label}{sep}")) {
            return rest.trim().to_string();
        }
    }
    t.to_string()
}

pub fn load_items(path: &Path) -> Result<Vec<BenchmarkItem>, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    parse_items(&text, base)
}

/// Parses JSONL text, resolving asset paths against `base`.
pub fn parse_items(text: &str, base: &Path) -> Result<Vec<BenchmarkItem>, HarnessError> {
    let mut items = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let violation = |detail: String| HarnessError::SchemaViolation { line: line_no, detail };
        let raw: RawItem = serde_json::from_str(line).map_err(|e| violation(e.to_string()))?;
        if raw.id.trim().is_empty() {
            return Err(violation("empty id".into()));
        }
        if !seen.insert(raw.id.clone()) {
            return Err(violation(format!("duplicate id `{}`", raw.id)));
        }
        if raw.question.trim().is_empty() {
            return Err(violation("empty question".into()));
        }
        if raw.choices.is_empty() || raw.choices.len() > 26 {
            return Err(violation(format!("{} choices; expected 1..=26", raw.choices.len())));
        }
        if raw.assets.is_empty() {
            return Err(violation("no assets".into()));
        }
        let choices: Vec<Choice> = raw
            .choices
            .iter()
            .enumerate()
            .map(|(i, t)| Choice { label: label(i), text: strip_label(t, &label(i)) })
            .collect();
        if let Some(answer) = &raw.answer {
            if !choices.iter().any(|c| &c.label == answer) {
                return Err(violation(format!(
                    "answer `{answer}` is not one of A..{}",
                    choices.last().map(|c| c.label.as_str()).unwrap_or("A")
                )));
            }
        }
        let mut assets = Vec::with_capacity(raw.assets.len());
        for a in raw.assets {
            let resolved = base.join(&a.path);
            if !resolved.exists() {
                return Err(HarnessError::MissingAsset(resolved.display().to_string()));
            }
            if a.kind == MediaKind::Video && resolved.is_file() && a.frames.is_none() {
                return Err(violation(format!("video file `{}` needs a `frames` count", a.path)));
            }
            if a.frames == Some(0) {
                return Err(violation("`frames` must be positive".into()));
            }
            assets.push(ItemAsset { kind: a.kind, path: resolved, frames: a.frames });
        }
        items.push(BenchmarkItem {
            id: raw.id,
            question: raw.question,
            choices,
            assets,
            domain: raw.domain,
            answer: raw.answer,
            split: raw.split,
        });
    }
    Ok(items)
}
