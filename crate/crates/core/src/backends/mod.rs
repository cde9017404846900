//! Chat-completion model clients behind one interface, with a content-addressed
//! record/replay cache and a scripted offline backend.

mod cache;
mod http;
mod scripted;

use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, LazyLock};
use std::time::Duration;

use rand::Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use cache::{CacheStats, ResponseCache};
pub use http::HttpTransport;
pub use scripted::{ScriptFailure, ScriptRule, ScriptedTransport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::System => "system",
            Role::User => "user",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Part {
    Text(String),
    Image {
        png: Arc<Vec<u8>>,
        media_type: String,
    },
}

impl Part {
    pub fn png(bytes: Arc<Vec<u8>>) -> Self {
        Part::Image {
            png: bytes,
            media_type: "image/png".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Message {
    pub role: Role,
    pub parts: Vec<Part>,
}

impl Message {
    pub fn user(parts: Vec<Part>) -> Self {
        Self {
            role: Role::User,
            parts,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelRequest {
    pub model_id: String,
    pub messages: Vec<Message>,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl ModelRequest {
    pub const DEFAULT_MAX_TOKENS: u32 = 256;

    /// Single user message, temperature 0.
    pub fn user(model_id: &str, parts: Vec<Part>) -> Self {
        Self {
            model_id: model_id.to_string(),
            messages: vec![Message::user(parts)],
            temperature: 0.0,
            max_tokens: Self::DEFAULT_MAX_TOKENS,
        }
    }

    pub fn parts(&self) -> impl Iterator<Item = &Part> {
        self.messages.iter().flat_map(|m| &m.parts)
    }

    pub fn image_count(&self) -> usize {
        self.parts()
            .filter(|p| matches!(p, Part::Image { .. }))
            .count()
    }

    /// All text parts joined by newlines.
    pub fn text(&self) -> String {
        self.parts()
            .filter_map(|p| match p {
                Part::Text(t) => Some(t.as_str()),
                Part::Image { .. } => None,
            })
            .collect::<Vec<_>>()
            .join("\n")
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if !self.messages.iter().any(|m| m.role == Role::User) {
            return Err(BackendError::InvalidRequest(
                "at least one user message is required".into(),
            ));
        }
        if self.image_count() > 1 {
            return Err(BackendError::InvalidRequest(
                "at most one image per request".into(),
            ));
        }
        if !self.temperature.is_finite() || self.temperature < 0.0 {
            return Err(BackendError::InvalidRequest(format!(
                "bad temperature {}",
                self.temperature
            )));
        }
        Ok(())
    }
}

fn put_bytes(h: &mut Sha256, bytes: &[u8]) {
    h.update((bytes.len() as u64).to_le_bytes());
    h.update(bytes);
}

/// Cache key: SHA-256 over a length-prefixed canonical serialization.
///
/// Layout: `"geovqa-request-v1"`, model id, temperature (IEEE bits, LE),
/// max tokens (u32 LE), message count (u64 LE), then per message its role and
/// part count, and per part either `T` + text or `I` + media type + SHA-256 of
/// the image bytes. Strings are UTF-8 prefixed by their u64 LE length.
pub fn request_digest(req: &ModelRequest) -> String {
    let mut h = Sha256::new();
    put_bytes(&mut h, b"geovqa-request-v1");
    put_bytes(&mut h, req.model_id.as_bytes());
    h.update(req.temperature.to_bits().to_le_bytes());
    h.update(req.max_tokens.to_le_bytes());
    h.update((req.messages.len() as u64).to_le_bytes());
    for m in &req.messages {
        put_bytes(&mut h, m.role.as_str().as_bytes());
        h.update((m.parts.len() as u64).to_le_bytes());
        for p in &m.parts {
            match p {
                Part::Text(t) => {
                    h.update(b"T");
                    put_bytes(&mut h, t.as_bytes());
                }
                Part::Image { png, media_type } => {
                    h.update(b"I");
                    put_bytes(&mut h, media_type.as_bytes());
                    h.update(Sha256::digest(png.as_slice()));
                }
            }
        }
    }
    hex::encode(h.finalize())
}

pub fn image_sha256(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinishReason {
    Stop,
    Length,
    Error,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub prompt: u64,
    pub completion: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelResponse {
    pub text: String,
    pub finish_reason: FinishReason,
    pub latency_ms: u64,
    pub token_usage: Option<TokenUsage>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    HttpOpenaiCompatible,
    Replay,
    Scripted,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CacheMode {
    #[default]
    Off,
    Record,
    Replay,
}

fn default_timeout() -> u64 {
    60
}

fn default_retries() -> u32 {
    3
}

fn default_retry_base() -> u64 {
    1000
}

/// Backend definition. Holds the *name* of the environment variable carrying
/// the API key, never the key itself; unknown fields are rejected so a stray
/// `api_key` entry fails loudly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendConfig {
    pub kind: BackendKind,
    pub model_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_url: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub api_key_env: Option<String>,
    #[serde(default = "default_timeout")]
    pub timeout_s: u64,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    #[serde(default = "default_retry_base")]
    pub retry_base_ms: u64,
    #[serde(default)]
    pub cache_mode: CacheMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cache_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub rules: Vec<ScriptRule>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default_reply: Option<String>,
}

static ENV_NAME: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^[A-Z_][A-Z0-9_]*$").unwrap());

impl BackendConfig {
    pub fn scripted(model_id: &str, rules: Vec<ScriptRule>, default_reply: Option<&str>) -> Self {
        Self {
            kind: BackendKind::Scripted,
            model_id: model_id.into(),
            base_url: None,
            api_key_env: None,
            timeout_s: default_timeout(),
            max_retries: default_retries(),
            retry_base_ms: default_retry_base(),
            cache_mode: CacheMode::Off,
            cache_dir: None,
            rules,
            default_reply: default_reply.map(str::to_string),
        }
    }

    pub fn replay(model_id: &str, cache_dir: impl Into<PathBuf>) -> Self {
        Self {
            kind: BackendKind::Replay,
            cache_mode: CacheMode::Replay,
            cache_dir: Some(cache_dir.into()),
            ..Self::scripted(model_id, Vec::new(), None)
        }
    }

    /// Short identifier recorded on traces.
    pub fn id(&self) -> String {
        let kind = match self.kind {
            BackendKind::HttpOpenaiCompatible => "http",
            BackendKind::Replay => "replay",
            BackendKind::Scripted => "scripted",
        };
        format!("{kind}:{}", self.model_id)
    }

    /// Effective cache mode: replay backends always replay.
    pub fn effective_cache_mode(&self) -> CacheMode {
        match self.kind {
            BackendKind::Replay => CacheMode::Replay,
            _ => self.cache_mode,
        }
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        let bad = |m: String| Err(BackendError::Config(m));
        if self.model_id.trim().is_empty() {
            return bad("model_id must not be empty".into());
        }
        if let Some(name) = &self.api_key_env {
            if !ENV_NAME.is_match(name) {
                return bad(format!(
                    "api_key_env must name an environment variable (e.g. OPENAI_API_KEY), got {:?}",
                    redact(name)
                ));
            }
        }
        if self.timeout_s == 0 {
            return bad("timeout_s must be positive".into());
        }
        if self.effective_cache_mode() != CacheMode::Off && self.cache_dir.is_none() {
            return bad(format!(
                "cache_mode {:?} needs cache_dir",
                self.effective_cache_mode()
            ));
        }
        if self.kind == BackendKind::HttpOpenaiCompatible && self.base_url.is_none() {
            return bad("http backends need base_url".into());
        }
        Ok(())
    }
}

/// Shows only the first few characters of a value that might be a secret.
fn redact(s: &str) -> String {
    let head: String = s.chars().take(3).collect();
    format!("{head}...")
}

/// Failure of one transport attempt.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum TransportError {
    #[error("HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("request timed out")]
    Timeout,
    #[error("connection error: {0}")]
    Connection(String),
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("scripted backend has no reply for this request")]
    NoScriptedReply,
}

impl TransportError {
    fn retryable(&self) -> bool {
        match self {
            TransportError::Status { status, .. } => *status == 429 || (500..600).contains(status),
            TransportError::Timeout | TransportError::Connection(_) => true,
            TransportError::Malformed(_) | TransportError::NoScriptedReply => false,
        }
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum BackendError {
    #[error("replay cache has no entry for request {digest}")]
    MissingCacheEntry { digest: String },
    #[error("authentication rejected (HTTP {status})")]
    AuthError { status: u16 },
    #[error("gave up after {attempts} attempts: {last}")]
    ExhaustedRetries { attempts: u32, last: TransportError },
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    #[error("request failed: {0}")]
    Transport(TransportError),
    #[error("environment variable {0} is not set")]
    MissingApiKey(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("invalid backend config: {0}")]
    Config(String),
    #[error("cache I/O: {0}")]
    Cache(String),
}

impl BackendError {
    /// Stable snake_case label for trace records.
    pub fn kind(&self) -> &'static str {
        match self {
            BackendError::MissingCacheEntry { .. } => "missing_cache_entry",
            BackendError::AuthError { .. } => "auth_error",
            BackendError::ExhaustedRetries { .. } => "exhausted_retries",
            BackendError::MalformedResponse(_) => "malformed_response",
            BackendError::Transport(_) => "transport",
            BackendError::MissingApiKey(_) => "missing_api_key",
            BackendError::InvalidRequest(_) => "invalid_request",
            BackendError::Config(_) => "config",
            BackendError::Cache(_) => "cache",
        }
    }
}

/// One attempt at answering a request. Implementations must be thread-safe.
pub trait Transport: Send + Sync {
    fn send(&self, req: &ModelRequest) -> Result<ModelResponse, TransportError>;
}

/// Wraps a transport and counts calls; used to prove replay runs stay offline.
pub struct CountingTransport {
    inner: Arc<dyn Transport>,
    calls: AtomicUsize,
}

impl CountingTransport {
    pub fn new(inner: Arc<dyn Transport>) -> Self {
        Self {
            inner,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl Transport for CountingTransport {
    fn send(&self, req: &ModelRequest) -> Result<ModelResponse, TransportError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.send(req)
    }
}

/// Transport that refuses every request; the default behind replay backends.
pub struct Offline;

impl Transport for Offline {
    fn send(&self, _: &ModelRequest) -> Result<ModelResponse, TransportError> {
        Err(TransportError::Connection("offline transport".into()))
    }
}

/// Configured client: cache lookup, transport, retries.
pub struct Backend {
    config: BackendConfig,
    transport: Arc<dyn Transport>,
    cache: Option<ResponseCache>,
}

impl Backend {
    /// Builds the transport the config asks for. HTTP backends read their API
    /// key here and fail fast when the named variable is unset.
    pub fn from_config(config: BackendConfig) -> Result<Self, BackendError> {
        config.validate()?;
        let transport: Arc<dyn Transport> = match config.kind {
            BackendKind::Scripted => Arc::new(ScriptedTransport::new(
                config.rules.clone(),
                config.default_reply.clone(),
            )),
            BackendKind::Replay => Arc::new(Offline),
            BackendKind::HttpOpenaiCompatible
                if config.effective_cache_mode() == CacheMode::Replay =>
            {
                Arc::new(Offline)
            }
            BackendKind::HttpOpenaiCompatible => Arc::new(HttpTransport::from_config(&config)?),
        };
        Self::with_transport(config, transport)
    }

    /// Uses `transport` in place of the one the config describes.
    pub fn with_transport(
        config: BackendConfig,
        transport: Arc<dyn Transport>,
    ) -> Result<Self, BackendError> {
        config.validate()?;
        let cache = match (config.effective_cache_mode(), &config.cache_dir) {
            (CacheMode::Off, _) | (_, None) => None,
            (_, Some(dir)) => Some(ResponseCache::new(dir.clone())),
        };
        Ok(Self {
            config,
            transport,
            cache,
        })
    }

    pub fn config(&self) -> &BackendConfig {
        &self.config
    }

    pub fn id(&self) -> String {
        self.config.id()
    }

    pub fn model_id(&self) -> &str {
        &self.config.model_id
    }

    pub fn cache_stats(&self) -> Option<CacheStats> {
        self.cache.as_ref().map(ResponseCache::stats)
    }

    fn backoff(&self, attempt: u32) -> Duration {
        let base = self.config.retry_base_ms as f64 * 2f64.powi(attempt as i32);
        let jitter = rand::rng().random_range(0.75..=1.25);
        Duration::from_secs_f64(base * jitter / 1000.0)
    }

    pub fn complete(&self, req: &ModelRequest) -> Result<ModelResponse, BackendError> {
        req.validate()?;
        let digest = request_digest(req);
        let mode = self.config.effective_cache_mode();
        if mode == CacheMode::Replay {
            let cache = self.cache.as_ref().expect("validated: replay has a cache");
            return cache
                .get(&digest)?
                .ok_or(BackendError::MissingCacheEntry { digest });
        }
        let max_attempts = 1 + self.config.max_retries;
        let mut attempt = 0;
        loop {
            match self.transport.send(req) {
                Ok(resp) => {
                    if mode == CacheMode::Record {
                        let cache = self.cache.as_ref().expect("validated: record has a cache");
                        cache.put(&digest, req, &resp)?;
                    }
                    return Ok(resp);
                }
                Err(TransportError::Status {
                    status: s @ (401 | 403),
                    ..
                }) => return Err(BackendError::AuthError { status: s }),
                Err(TransportError::Malformed(m)) => {
                    return Err(BackendError::MalformedResponse(m))
                }
                Err(e) if !e.retryable() => return Err(BackendError::Transport(e)),
                Err(e) => {
                    attempt += 1;
                    if attempt >= max_attempts {
                        return Err(BackendError::ExhaustedRetries {
                            attempts: attempt,
                            last: e,
                        });
                    }
                    std::thread::sleep(self.backoff(attempt - 1));
                }
            }
        }
    }
}
