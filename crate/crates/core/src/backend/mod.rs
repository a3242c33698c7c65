//! Model-completion contract and its implementations.
//!
//! - [`ScriptedBackend`]: per-role fixture queues, fully deterministic.
//! - [`RecordingBackend`] / [`ReplayBackend`]: cassette capture and playback
//!   keyed by a request digest.
//! - [`OpenAiBackend`]: OpenAI-compatible `/v1/chat/completions` client with
//!   retry and exponential backoff.

mod cassette;
mod live;
mod scripted;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::canon::{CanonicalInput, MediaKind};

pub use cassette::{Cassette, CassetteEntry, RecordingBackend, ReplayBackend};
pub use live::{LiveConfig, OpenAiBackend, RetryPolicy};
pub use scripted::{ScriptFile, ScriptedBackend};

pub const DEFAULT_MAX_TOKENS: u32 = 1024;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BackendError {
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("rate limited after retries were exhausted")]
    RateLimited,
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    #[error("request timed out")]
    Timeout,
    #[error("cassette has no response for {role} request {digest}")]
    CassetteMiss { role: RoleTag, digest: String },
    #[error("scripted fixtures exhausted for role {0}")]
    ScriptExhausted(RoleTag),
    #[error("attachment `{0}` cannot be encoded")]
    AttachmentUnavailable(String),
    #[error("i/o failure: {0}")]
    Io(String),
    #[error("backend configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoleTag {
    Hypothesizer,
    Gatherer,
    Validator,
    Degenerative,
    Discovery,
    Reflection,
}

impl RoleTag {
    pub const ALL: [RoleTag; 6] = [
        RoleTag::Hypothesizer,
        RoleTag::Gatherer,
        RoleTag::Validator,
        RoleTag::Degenerative,
        RoleTag::Discovery,
        RoleTag::Reflection,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            RoleTag::Hypothesizer => "hypothesizer",
            RoleTag::Gatherer => "gatherer",
            RoleTag::Validator => "validator",
            RoleTag::Degenerative => "degenerative",
            RoleTag::Discovery => "discovery",
            RoleTag::Reflection => "reflection",
        }
    }
}

impl fmt::Display for RoleTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Speaker {
    System,
    User,
}

/// Reference to one sampled frame; pixels are never carried by the engine.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attachment {
    pub locator: String,
    pub kind: MediaKind,
    pub frame_index: u32,
    pub target_resolution: u32,
}

impl Attachment {
    /// One attachment per manifest entry of `input`.
    pub fn for_input(input: &CanonicalInput) -> Vec<Attachment> {
        input
            .assets
            .iter()
            .flat_map(|asset| {
                asset.sampled_frame_indices.iter().map(move |&frame_index| Attachment {
                    locator: asset.source_ref.clone(),
                    kind: asset.media_kind,
                    frame_index,
                    target_resolution: asset.target_resolution,
                })
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub speaker: Speaker,
    pub text: String,
    #[serde(default)]
    pub attachments: Vec<Attachment>,
}

impl Message {
    pub fn system(text: impl Into<String>) -> Self {
        Self { speaker: Speaker::System, text: text.into(), attachments: Vec::new() }
    }

    pub fn user(text: impl Into<String>) -> Self {
        Self { speaker: Speaker::User, text: text.into(), attachments: Vec::new() }
    }

    pub fn with_attachments(mut self, attachments: Vec<Attachment>) -> Self {
        self.attachments = attachments;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRequest {
    pub role: RoleTag,
    pub messages: Vec<Message>,
    pub temperature: f32,
    pub max_tokens: u32,
}

impl ModelRequest {
    pub fn new(role: RoleTag, messages: Vec<Message>) -> Self {
        Self { role, messages, temperature: 0.0, max_tokens: DEFAULT_MAX_TOKENS }
    }

    /// Concatenated text of all messages, mostly useful to test doubles.
    pub fn full_text(&self) -> String {
        self.messages.iter().map(|m| m.text.as_str()).collect::<Vec<_>>().join("\n")
    }

    /// Stable identity of a request: role, normalized message texts and
    /// attachment locators/frames. Pixel content never enters the digest.
    pub fn digest(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.role.as_str().as_bytes());
        for message in &self.messages {
            hasher.update([0x1e]);
            let normalized = message.text.replace("\r\n", "\n");
            hasher.update(normalized.trim().as_bytes());
            for a in &message.attachments {
                hasher.update([0x1f]);
                hasher.update(format!("{}#{}", a.locator, a.frame_index).as_bytes());
            }
        }
        hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelResponse {
    pub text: String,
    pub usage: Usage,
    pub latency_ms: u64,
}

impl ModelResponse {
    pub fn text_only(text: impl Into<String>) -> Self {
        Self { text: text.into(), usage: Usage::default(), latency_ms: 0 }
    }
}

/// A chat-completion provider. Implementations must accept concurrent calls.
pub trait Backend: Send + Sync {
    fn complete(&self, request: &ModelRequest) -> Result<ModelResponse, BackendError>;
}

impl<B: Backend + ?Sized> Backend for Arc<B> {
    fn complete(&self, request: &ModelRequest) -> Result<ModelResponse, BackendError> {
        (**self).complete(request)
    }
}

impl<B: Backend + ?Sized> Backend for &B {
    fn complete(&self, request: &ModelRequest) -> Result<ModelResponse, BackendError> {
        (**self).complete(request)
    }
}

impl<B: Backend + ?Sized> Backend for Box<B> {
    fn complete(&self, request: &ModelRequest) -> Result<ModelResponse, BackendError> {
        (**self).complete(request)
    }
}

/// Adapts a closure into a backend; handy for content-aware test doubles.
pub struct FnBackend<F>(pub F);

impl<F> Backend for FnBackend<F>
where
    F: Fn(&ModelRequest) -> Result<String, BackendError> + Send + Sync,
{
    fn complete(&self, request: &ModelRequest) -> Result<ModelResponse, BackendError> {
        (self.0)(request).map(ModelResponse::text_only)
    }
}
