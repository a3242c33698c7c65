use std::path::Path;
use std::time::{Duration, Instant};

use base64::Engine as _;
use serde_json::{json, Value};

use super::{Attachment, Backend, BackendError, Message, ModelRequest, ModelResponse, Speaker, Usage};
use crate::canon::{frame_files, MediaKind};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay: Duration,
    pub factor: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { max_attempts: 5, base_delay: Duration::from_secs(1), factor: 2.0 }
    }
}

impl RetryPolicy {
    /// Delay slept after failed attempt number `attempt` (1-based).
    pub fn delay_after(&self, attempt: u32) -> Duration {
        let exp = self.factor.powi(attempt.saturating_sub(1) as i32);
        self.base_delay.mul_f64(exp)
    }
}

#[derive(Debug, Clone)]
pub struct LiveConfig {
    pub base_url: String,
    pub model: String,
    pub api_key: Option<String>,
    pub timeout: Duration,
    pub retry: RetryPolicy,
}

impl LiveConfig {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            model: model.into(),
            api_key: None,
            timeout: Duration::from_secs(120),
            retry: RetryPolicy::default(),
        }
    }

    pub fn endpoint(&self) -> String {
        let base = self.base_url.trim_end_matches('/');
        if base.ends_with("/v1") {
            format!("{base}/chat/completions")
        } else {
            format!("{base}/v1/chat/completions")
        }
    }
}

/// Blocking client for any OpenAI-compatible chat-completions server.
pub struct OpenAiBackend {
    config: LiveConfig,
    client: reqwest::blocking::Client,
}

enum Attempt {
    Retry(BackendError),
    Fatal(BackendError),
}

impl OpenAiBackend {
    pub fn new(config: LiveConfig) -> Result<Self, BackendError> {
        if config.retry.max_attempts == 0 {
            return Err(BackendError::Config("max_attempts must be at least 1".into()));
        }
        let client = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| BackendError::Config(e.to_string()))?;
        Ok(Self { config, client })
    }

    pub fn config(&self) -> &LiveConfig {
        &self.config
    }

    /// Request body in the chat-completions wire format.
    pub fn request_body(&self, request: &ModelRequest) -> Result<Value, BackendError> {
        let messages = request.messages.iter().map(encode_message).collect::<Result<Vec<_>, _>>()?;
        Ok(json!({
            "model": self.config.model,
            "messages": messages,
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
            "stream": false,
        }))
    }

    fn attempt(&self, body: &Value) -> Result<(String, Usage), Attempt> {
        let mut builder = self.client.post(self.config.endpoint()).json(body);
        if let Some(key) = &self.config.api_key {
            builder = builder.bearer_auth(key);
        }
        let response = builder.send().map_err(|e| {
            if e.is_timeout() {
                Attempt::Retry(BackendError::Timeout)
            } else {
                Attempt::Retry(BackendError::Transport(e.to_string()))
            }
        })?;
        let status = response.status();
        if status.as_u16() == 429 {
            return Err(Attempt::Retry(BackendError::RateLimited));
        }
        let text = response.text().map_err(|e| {
            if e.is_timeout() {
                Attempt::Retry(BackendError::Timeout)
            } else {
                Attempt::Retry(BackendError::Transport(e.to_string()))
            }
        })?;
        if status.is_server_error() {
            return Err(Attempt::Retry(BackendError::Transport(format!("HTTP {status}: {}", snippet(&text)))));
        }
        if !status.is_success() {
            return Err(Attempt::Fatal(BackendError::Transport(format!("HTTP {status}: {}", snippet(&text)))));
        }
        parse_completion(&text).map_err(Attempt::Fatal)
    }
}

impl Backend for OpenAiBackend {
    fn complete(&self, request: &ModelRequest) -> Result<ModelResponse, BackendError> {
        let body = self.request_body(request)?;
        let started = Instant::now();
        let policy = self.config.retry;
        let mut attempt = 1;
        loop {
            match self.attempt(&body) {
                Ok((text, usage)) => {
                    return Ok(ModelResponse { text, usage, latency_ms: started.elapsed().as_millis() as u64 });
                }
                Err(Attempt::Fatal(e)) => return Err(e),
                Err(Attempt::Retry(e)) => {
                    if attempt >= policy.max_attempts {
                        return Err(e);
                    }
                    tracing::warn!(attempt, error = %e, role = %request.role, "retrying model request");
                    std::thread::sleep(policy.delay_after(attempt));
                    attempt += 1;
                }
            }
        }
    }
}

fn snippet(text: &str) -> String {
    text.chars().take(200).collect()
}

/// Extracts the first choice's message text and usage from a response body.
pub(crate) fn parse_completion(body: &str) -> Result<(String, Usage), BackendError> {
    let value: Value = serde_json::from_str(body).map_err(|e| BackendError::MalformedResponse(e.to_string()))?;
    let content = value
        .pointer("/choices/0/message/content")
        .ok_or_else(|| BackendError::MalformedResponse("missing choices[0].message.content".into()))?;
    let text = match content {
        Value::String(s) => s.clone(),
        Value::Array(parts) => {
            parts.iter().filter_map(|p| p.get("text").and_then(Value::as_str)).collect::<Vec<_>>().join("")
        }
        _ => return Err(BackendError::MalformedResponse("content is neither text nor parts".into())),
    };
    let usage = Usage {
        prompt_tokens: value.pointer("/usage/prompt_tokens").and_then(Value::as_u64).unwrap_or(0),
        completion_tokens: value.pointer("/usage/completion_tokens").and_then(Value::as_u64).unwrap_or(0),
    };
    Ok((text, usage))
}

fn encode_message(message: &Message) -> Result<Value, BackendError> {
    let role = match message.speaker {
        Speaker::System => "system",
        Speaker::User => "user",
    };
    if message.attachments.is_empty() {
        return Ok(json!({ "role": role, "content": message.text }));
    }
    let mut parts = vec![json!({ "type": "text", "text": message.text })];
    for a in &message.attachments {
        parts.push(json!({ "type": "image_url", "image_url": { "url": attachment_url(a)? } }));
    }
    Ok(json!({ "role": role, "content": parts }))
}

fn attachment_url(a: &Attachment) -> Result<String, BackendError> {
    let loc = a.locator.as_str();
    if loc.starts_with("http://") || loc.starts_with("https://") || loc.starts_with("data:") {
        return Ok(loc.to_string());
    }
    let path = Path::new(loc);
    let file = match a.kind {
        MediaKind::Image => path.to_path_buf(),
        MediaKind::Video if path.is_dir() => frame_files(path)
            .and_then(|files| files.into_iter().nth(a.frame_index as usize))
            .ok_or_else(|| BackendError::AttachmentUnavailable(format!("{loc}#{}", a.frame_index)))?,
        // Container formats would need a decoder; only frame directories are supported.
        MediaKind::Video => return Err(BackendError::AttachmentUnavailable(loc.to_string())),
    };
    let bytes = std::fs::read(&file).map_err(|_| BackendError::AttachmentUnavailable(file.display().to_string()))?;
    let mime = match file.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
        Some("png") => "image/png",
        Some("gif") => "image/gif",
        Some("webp") => "image/webp",
        Some("bmp") => "image/bmp",
        _ => "image/jpeg",
    };
    Ok(format!("data:{mime};base64,{}", base64::engine::general_purpose::STANDARD.encode(bytes)))
}
