//! Chat-completion transport: a blocking HTTP client and a scripted
//! client that replays canned replies from a file.

use std::collections::VecDeque;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

pub const API_KEY_ENV: &str = "HDTWIN_LLM_API_KEY";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn system(content: impl Into<String>) -> Self {
        Message {
            role: Role::System,
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Message {
            role: Role::User,
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Message {
            role: Role::Assistant,
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecodingConfig {
    pub model: String,
    pub temperature: f64,
    pub max_output_tokens: u32,
    pub timeout_secs: u64,
    /// Transport retries per request, and re-prompts per proposal.
    pub retries: usize,
    /// First transport back-off; doubles on each retry.
    pub backoff_ms: u64,
}

impl Default for DecodingConfig {
    fn default() -> Self {
        DecodingConfig {
            model: "gpt-4-1106-preview".into(),
            temperature: 0.7,
            max_output_tokens: 4096,
            timeout_secs: 120,
            retries: 3,
            backoff_ms: 1000,
        }
    }
}

impl DecodingConfig {
    pub fn check(&self) -> Result<(), ClientError> {
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(ClientError::Config("temperature must be non-negative".into()));
        }
        if self.model.trim().is_empty() {
            return Err(ClientError::Config("model name is empty".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ClientError {
    #[error("request timed out")]
    Timeout,
    #[error("endpoint returned status {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed response body: {0}")]
    Body(String),
    #[error("transport: {0}")]
    Transport(String),
    #[error("replay file has no reply left for request {0}")]
    ReplayExhausted(usize),
    #[error("replay file: {0}")]
    Replay(String),
    #[error("client config: {0}")]
    Config(String),
}

impl ClientError {
    fn retryable(&self) -> bool {
        match self {
            ClientError::Timeout | ClientError::Transport(_) => true,
            ClientError::Status { status, .. } => *status == 429 || *status >= 500,
            _ => false,
        }
    }
}

pub trait LlmClient {
    fn complete(&mut self, messages: &[Message], cfg: &DecodingConfig) -> Result<String, ClientError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EndpointConfig {
    /// Base URL; `/chat/completions` is appended.
    pub base_url: String,
    /// Environment variable holding the bearer token.
    pub api_key_env: String,
}

impl Default for EndpointConfig {
    fn default() -> Self {
        EndpointConfig {
            base_url: "https://api.openai.com/v1".into(),
            api_key_env: API_KEY_ENV.into(),
        }
    }
}

pub struct HttpClient {
    url: String,
    api_key: Option<String>,
    agent: ureq::Agent,
}

impl HttpClient {
    pub fn new(endpoint: &EndpointConfig, cfg: &DecodingConfig) -> Result<Self, ClientError> {
        cfg.check()?;
        let api_key = std::env::var(&endpoint.api_key_env).ok().filter(|k| !k.is_empty());
        if api_key.is_none() {
            log::warn!("{} is not set; sending requests without authorization", endpoint.api_key_env);
        }
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(cfg.timeout_secs.max(1))))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(HttpClient {
            url: format!("{}/chat/completions", endpoint.base_url.trim_end_matches('/')),
            api_key,
            agent,
        })
    }

    /// Request body for `messages` under `cfg`.
    pub fn request_body(messages: &[Message], cfg: &DecodingConfig) -> serde_json::Value {
        json!({
            "model": cfg.model,
            "temperature": cfg.temperature,
            "max_tokens": cfg.max_output_tokens,
            "messages": messages
                .iter()
                .map(|m| json!({"role": m.role.as_str(), "content": m.content}))
                .collect::<Vec<_>>(),
        })
    }

    fn attempt(&self, body: &str) -> Result<String, ClientError> {
        let mut req = self.agent.post(&self.url).header("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req.send(body).map_err(|e| match e {
            ureq::Error::Timeout(_) => ClientError::Timeout,
            other => ClientError::Transport(other.to_string()),
        })?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| ClientError::Body(e.to_string()))?;
        if !(200..300).contains(&status) {
            return Err(ClientError::Status { status, body: text });
        }
        extract_reply_text(&text)
    }
}

/// Message content, or the first tool call's arguments when content is empty.
pub fn extract_reply_text(body: &str) -> Result<String, ClientError> {
    let v: serde_json::Value = serde_json::from_str(body).map_err(|e| ClientError::Body(e.to_string()))?;
    let msg = v
        .pointer("/choices/0/message")
        .ok_or_else(|| ClientError::Body("no choices[0].message".into()))?;
    if let Some(s) = msg.get("content").and_then(|c| c.as_str()).filter(|s| !s.is_empty()) {
        return Ok(s.to_string());
    }
    if let Some(args) = msg.pointer("/tool_calls/0/function/arguments").and_then(|a| a.as_str()) {
        return Ok(args.to_string());
    }
    if let Some(args) = msg.pointer("/function_call/arguments").and_then(|a| a.as_str()) {
        return Ok(args.to_string());
    }
    Err(ClientError::Body("message has neither content nor tool-call arguments".into()))
}

impl LlmClient for HttpClient {
    fn complete(&mut self, messages: &[Message], cfg: &DecodingConfig) -> Result<String, ClientError> {
        if messages.is_empty() {
            return Err(ClientError::Config("no messages to send".into()));
        }
        let body = Self::request_body(messages, cfg).to_string();
        let mut delay = cfg.backoff_ms;
        let mut tries = 0;
        loop {
            match self.attempt(&body) {
                Ok(text) => return Ok(text),
                Err(e) if e.retryable() && tries < cfg.retries => {
                    tries += 1;
                    log::warn!("request failed ({e}); retry {tries} of {}", cfg.retries);
                    std::thread::sleep(Duration::from_millis(delay));
                    delay = delay.saturating_mul(2);
                }
                Err(e) => return Err(e),
            }
        }
    }
}

/// Header line of the replay container.
pub const REPLAY_MAGIC: &str = "hdtwin-replay 1";

/// One canned reply with a free-form tag naming the request kind.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReplayEntry {
    pub tag: String,
    pub text: String,
}

/// Replay container:
///
/// ```text
/// hdtwin-replay 1
/// >>> <tag> <byte length>
/// <exactly that many bytes>
/// ```
///
/// Each payload is followed by one newline before the next `>>>` line.
pub fn format_replay(entries: &[ReplayEntry]) -> String {
    let mut out = format!("{REPLAY_MAGIC}\n");
    for e in entries {
        out.push_str(&format!(">>> {} {}\n{}\n", e.tag, e.text.len(), e.text));
    }
    out
}

pub fn parse_replay(text: &str) -> Result<Vec<ReplayEntry>, ClientError> {
    let bad = |m: String| ClientError::Replay(m);
    let rest = text
        .strip_prefix(REPLAY_MAGIC)
        .and_then(|r| r.strip_prefix('\n'))
        .ok_or_else(|| bad(format!("missing `{REPLAY_MAGIC}` header")))?;
    let mut entries = Vec::new();
    let mut pos = 0;
    let bytes = rest.as_bytes();
    while pos < bytes.len() {
        let line_end = rest[pos..]
            .find('\n')
            .map(|i| pos + i)
            .ok_or_else(|| bad(format!("entry {} header is not terminated", entries.len() + 1)))?;
        let header = &rest[pos..line_end];
        let fields = header
            .strip_prefix(">>> ")
            .ok_or_else(|| bad(format!("expected `>>> tag length`, found `{header}`")))?;
        let (tag, len) = fields
            .rsplit_once(' ')
            .ok_or_else(|| bad(format!("entry header `{header}` has no length")))?;
        if tag.is_empty() || tag.contains(char::is_whitespace) {
            return Err(bad(format!("entry header `{header}` has an invalid tag")));
        }
        let len: usize = len
            .parse()
            .map_err(|_| bad(format!("entry header `{header}` has a non-numeric length")))?;
        let start = line_end + 1;
        let end = start
            .checked_add(len)
            .filter(|e| *e < bytes.len())
            .ok_or_else(|| bad(format!("entry `{tag}` is truncated")))?;
        if !rest.is_char_boundary(end) || bytes[end] != b'\n' {
            return Err(bad(format!("entry `{tag}` is not followed by a newline")));
        }
        entries.push(ReplayEntry {
            tag: tag.to_string(),
            text: rest[start..end].to_string(),
        });
        pos = end + 1;
    }
    Ok(entries)
}

/// Pops replies in order and keeps every request it answered.
#[derive(Debug, Clone, Default)]
pub struct ScriptedClient {
    replies: VecDeque<ReplayEntry>,
    served: usize,
    pub requests: Vec<Vec<Message>>,
}

impl ScriptedClient {
    pub fn new(replies: Vec<ReplayEntry>) -> Self {
        ScriptedClient {
            replies: replies.into(),
            served: 0,
            requests: Vec::new(),
        }
    }

    pub fn from_texts<S: Into<String>>(texts: impl IntoIterator<Item = S>) -> Self {
        Self::new(
            texts
                .into_iter()
                .map(|t| ReplayEntry {
                    tag: "reply".into(),
                    text: t.into(),
                })
                .collect(),
        )
    }

    pub fn from_replay_text(text: &str) -> Result<Self, ClientError> {
        Ok(Self::new(parse_replay(text)?))
    }

    pub fn remaining(&self) -> usize {
        self.replies.len()
    }
}

impl LlmClient for ScriptedClient {
    fn complete(&mut self, messages: &[Message], _cfg: &DecodingConfig) -> Result<String, ClientError> {
        if messages.is_empty() {
            return Err(ClientError::Config("no messages to send".into()));
        }
        self.requests.push(messages.to_vec());
        self.served += 1;
        self.replies
            .pop_front()
            .map(|e| e.text)
            .ok_or(ClientError::ReplayExhausted(self.served))
    }
}
