//! Spatio-temporal canonicalization.
//!
//! Every image and every sampled video frame receives an immutable identifier
//! (`[#0image]`, `[#1videoframe3]`). The identifiers are listed in a manifest
//! block ahead of the verbatim question, and every observation the agent
//! records must name one of them.

use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Frames sampled per video when nothing else is configured.
pub const DEFAULT_FRAMES: u32 = 4;
/// Long-edge resolution forwarded to the model backend.
pub const DEFAULT_RESOLUTION: u32 = 512;

static VISUAL_ID_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^\[#(0|[1-9][0-9]*)(?:image|videoframe(0|[1-9][0-9]*))\]$").unwrap());

static VISUAL_ID_SCAN_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\[#[^\]\s]*\]").unwrap());

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CanonError {
    #[error("question is empty")]
    EmptyQuestion,
    #[error("no visual assets supplied")]
    NoAssets,
    #[error("cannot determine frame count of `{0}`")]
    UnreadableAsset(String),
    #[error("malformed visual identifier `{0}`")]
    MalformedId(String),
    #[error("malformed observation line `{0}`")]
    MalformedObservation(String),
    #[error("identifier {0} does not resolve against the manifest")]
    UnresolvedId(VisualId),
    #[error("observation has an empty entity or description")]
    EmptyField,
}

/// Immutable reference to one image or one sampled video frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum VisualId {
    Image { asset: u32 },
    VideoFrame { asset: u32, frame: u32 },
}

impl VisualId {
    pub fn asset_index(&self) -> u32 {
        match *self {
            VisualId::Image { asset } | VisualId::VideoFrame { asset, .. } => asset,
        }
    }

    pub fn frame_index(&self) -> Option<u32> {
        match *self {
            VisualId::Image { .. } => None,
            VisualId::VideoFrame { frame, .. } => Some(frame),
        }
    }
}

impl fmt::Display for VisualId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VisualId::Image { asset } => write!(f, "[#{asset}image]"),
            VisualId::VideoFrame { asset, frame } => write!(f, "[#{asset}videoframe{frame}]"),
        }
    }
}

impl FromStr for VisualId {
    type Err = CanonError;

    fn from_str(token: &str) -> Result<Self, Self::Err> {
        let malformed = || CanonError::MalformedId(token.to_string());
        let caps = VISUAL_ID_RE.captures(token).ok_or_else(malformed)?;
        let asset: u32 = caps[1].parse().map_err(|_| malformed())?;
        match caps.get(2) {
            None => Ok(VisualId::Image { asset }),
            Some(frame) => {
                let frame = frame.as_str().parse().map_err(|_| malformed())?;
                Ok(VisualId::VideoFrame { asset, frame })
            }
        }
    }
}

impl Serialize for VisualId {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for VisualId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

pub fn format_visual_id(id: VisualId) -> String {
    id.to_string()
}

pub fn parse_visual_id(token: &str) -> Result<VisualId, CanonError> {
    token.parse()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MediaKind {
    Image,
    Video,
}

/// An input asset as handed to [`canonicalize`], before frame sampling.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawAsset {
    pub kind: MediaKind,
    pub locator: String,
    /// Known frame count for videos. When absent and the locator is a
    /// directory, its files are counted as frames.
    pub frame_count: Option<u32>,
}

impl RawAsset {
    pub fn image(locator: impl Into<String>) -> Self {
        Self { kind: MediaKind::Image, locator: locator.into(), frame_count: None }
    }

    pub fn video(locator: impl Into<String>, frames: u32) -> Self {
        Self { kind: MediaKind::Video, locator: locator.into(), frame_count: Some(frames) }
    }

    fn total_frames(&self) -> Result<u32, CanonError> {
        let unreadable = || CanonError::UnreadableAsset(self.locator.clone());
        match self.kind {
            MediaKind::Image => Ok(1),
            MediaKind::Video => match self.frame_count {
                Some(0) => Err(unreadable()),
                Some(n) => Ok(n),
                None => {
                    let n = count_frame_files(Path::new(&self.locator)).ok_or_else(unreadable)?;
                    if n == 0 {
                        Err(unreadable())
                    } else {
                        Ok(n)
                    }
                }
            },
        }
    }
}

/// Frame files of a video stored as a directory, sorted by file name.
pub fn frame_files(dir: &Path) -> Option<Vec<std::path::PathBuf>> {
    let entries = std::fs::read_dir(dir).ok()?;
    let mut files: Vec<_> = entries
        .filter_map(|e| e.ok())
        .filter(|e| e.file_type().map(|t| t.is_file()).unwrap_or(false))
        .filter(|e| !e.file_name().to_string_lossy().starts_with('.'))
        .map(|e| e.path())
        .collect();
    files.sort();
    Some(files)
}

fn count_frame_files(dir: &Path) -> Option<u32> {
    if !dir.is_dir() {
        return None;
    }
    frame_files(dir).and_then(|f| u32::try_from(f.len()).ok())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VisualAsset {
    pub asset_index: u32,
    pub media_kind: MediaKind,
    pub source_ref: String,
    pub total_frames: u32,
    pub sampled_frame_indices: Vec<u32>,
    pub target_resolution: u32,
}

impl VisualAsset {
    /// Identifiers for this asset in manifest order.
    pub fn visual_ids(&self) -> Vec<VisualId> {
        match self.media_kind {
            MediaKind::Image => vec![VisualId::Image { asset: self.asset_index }],
            MediaKind::Video => self
                .sampled_frame_indices
                .iter()
                .map(|&frame| VisualId::VideoFrame { asset: self.asset_index, frame })
                .collect(),
        }
    }
}

/// The grounded reference pair: annotated question plus identifier-tagged assets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CanonicalInput {
    pub original_question: String,
    pub annotated_question: String,
    pub assets: Vec<VisualAsset>,
}

impl CanonicalInput {
    pub fn visual_ids(&self) -> Vec<VisualId> {
        self.assets.iter().flat_map(VisualAsset::visual_ids).collect()
    }

    /// Manifest block: one identifier per line.
    pub fn manifest(&self) -> String {
        self.visual_ids().iter().map(ToString::to_string).collect::<Vec<_>>().join("\n")
    }

    /// True when `id` names an asset of the right kind and, for frames, a sampled frame.
    pub fn resolves(&self, id: &VisualId) -> bool {
        let Some(asset) = self.assets.get(id.asset_index() as usize) else {
            return false;
        };
        match (id, asset.media_kind) {
            (VisualId::Image { .. }, MediaKind::Image) => true,
            (VisualId::VideoFrame { frame, .. }, MediaKind::Video) => {
                asset.sampled_frame_indices.binary_search(frame).is_ok()
            }
            _ => false,
        }
    }

    /// Every `[#...]` token in the annotated question, parsed or not.
    pub fn scan_tokens(&self) -> Vec<&str> {
        VISUAL_ID_SCAN_RE.find_iter(&self.annotated_question).map(|m| m.as_str()).collect()
    }
}

/// Endpoint-inclusive uniform sampling of `k` frame indices out of `total_frames`.
pub fn sample_frame_indices(total_frames: u32, k: u32) -> Vec<u32> {
    debug_assert!(total_frames >= 1 && k >= 1);
    if total_frames <= k {
        return (0..total_frames).collect();
    }
    if k == 1 {
        return vec![0];
    }
    let last = u64::from(total_frames - 1);
    let steps = u64::from(k - 1);
    (0..u64::from(k)).map(|j| (j * last / steps) as u32).collect()
}

pub fn canonicalize(
    question: &str,
    assets: &[RawAsset],
    k: u32,
    resolution: u32,
) -> Result<CanonicalInput, CanonError> {
    if question.trim().is_empty() {
        return Err(CanonError::EmptyQuestion);
    }
    if assets.is_empty() {
        return Err(CanonError::NoAssets);
    }
    let k = k.max(1);
    let visual_assets = assets
        .iter()
        .enumerate()
        .map(|(i, raw)| {
            let total_frames = raw.total_frames()?;
            let sampled_frame_indices = match raw.kind {
                MediaKind::Image => vec![0],
                MediaKind::Video => sample_frame_indices(total_frames, k),
            };
            Ok(VisualAsset {
                asset_index: i as u32,
                media_kind: raw.kind,
                source_ref: raw.locator.clone(),
                total_frames,
                sampled_frame_indices,
                target_resolution: resolution,
            })
        })
        .collect::<Result<Vec<_>, CanonError>>()?;

    let mut input = CanonicalInput {
        original_question: question.to_string(),
        annotated_question: String::new(),
        assets: visual_assets,
    };
    input.annotated_question = format!("{}\n\n{}", input.manifest(), question);
    Ok(input)
}

/// One grounded micro-fact: which frame, which entity, what property.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TriadicObservation {
    pub visual: VisualId,
    pub entity: String,
    pub description: String,
}

impl fmt::Display for TriadicObservation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({} | {} | {})", self.visual, self.entity, self.description)
    }
}

pub fn parse_triadic_observation(line: &str, context: &CanonicalInput) -> Result<TriadicObservation, CanonError> {
    let malformed = || CanonError::MalformedObservation(line.to_string());
    let inner = line.trim().strip_prefix('(').and_then(|s| s.strip_suffix(')')).ok_or_else(malformed)?;
    let fields: Vec<&str> = inner.split('|').map(str::trim).collect();
    let [id, entity, description] = fields[..] else {
        return Err(malformed());
    };
    let visual: VisualId = id.parse().map_err(|_| malformed())?;
    if entity.is_empty() || description.is_empty() {
        return Err(CanonError::EmptyField);
    }
    if !context.resolves(&visual) {
        return Err(CanonError::UnresolvedId(visual));
    }
    Ok(TriadicObservation { visual, entity: entity.to_string(), description: description.to_string() })
}
