use std::time::{Duration, Instant};

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use reqwest::blocking::Client;
use reqwest::header::CONTENT_TYPE;
use serde_json::{json, Value};

use super::{
    BackendConfig, BackendError, FinishReason, ModelRequest, ModelResponse, Part, TokenUsage,
    Transport, TransportError,
};

/// Chat-completions client; images travel as base64 data URLs.
pub struct HttpTransport {
    client: Client,
    endpoint: String,
    api_key: Option<String>,
}

impl HttpTransport {
    pub fn from_config(config: &BackendConfig) -> Result<Self, BackendError> {
        let base = config
            .base_url
            .as_deref()
            .ok_or_else(|| BackendError::Config("http backends need base_url".into()))?;
        let api_key = match &config.api_key_env {
            Some(var) => {
                Some(std::env::var(var).map_err(|_| BackendError::MissingApiKey(var.clone()))?)
            }
            None => None,
        };
        let client = Client::builder()
            .timeout(Duration::from_secs(config.timeout_s))
            .build()
            .map_err(|e| BackendError::Config(format!("HTTP client: {e}")))?;
        Ok(Self {
            client,
            endpoint: format!("{}/chat/completions", base.trim_end_matches('/')),
            api_key,
        })
    }
}

pub(crate) fn request_body(req: &ModelRequest) -> Value {
    let messages: Vec<Value> = req
        .messages
        .iter()
        .map(|m| {
            let content: Vec<Value> = m
                .parts
                .iter()
                .map(|p| match p {
                    Part::Text(t) => json!({"type": "text", "text": t}),
                    Part::Image { png, media_type } => json!({
                        "type": "image_url",
                        "image_url": {"url": format!("data:{media_type};base64,{}", STANDARD.encode(png.as_slice()))},
                    }),
                })
                .collect();
            json!({"role": m.role.as_str(), "content": content})
        })
        .collect();
    json!({
        "model": req.model_id,
        "messages": messages,
        "temperature": req.temperature,
        "max_tokens": req.max_tokens,
    })
}

pub(crate) fn parse_body(body: &str, latency_ms: u64) -> Result<ModelResponse, TransportError> {
    let malformed = |m: &str| TransportError::Malformed(m.to_string());
    let v: Value = serde_json::from_str(body).map_err(|e| malformed(&e.to_string()))?;
    let choice = v["choices"].get(0).ok_or_else(|| malformed("no choices"))?;
    let content = &choice["message"]["content"];
    // some servers return content as a list of text parts
    let text = match content {
        Value::String(s) => s.clone(),
        Value::Array(parts) => parts
            .iter()
            .filter_map(|p| p["text"].as_str())
            .collect::<Vec<_>>()
            .join(""),
        Value::Null => String::new(),
        _ => return Err(malformed("unexpected content type")),
    };
    let finish_reason = match choice["finish_reason"].as_str() {
        Some("stop") | None => FinishReason::Stop,
        Some("length") => FinishReason::Length,
        Some(_) => FinishReason::Error,
    };
    if finish_reason == FinishReason::Stop && content.is_null() {
        return Err(malformed("finished without content"));
    }
    let token_usage = v["usage"]["prompt_tokens"]
        .as_u64()
        .map(|prompt| TokenUsage {
            prompt,
            completion: v["usage"]["completion_tokens"].as_u64().unwrap_or(0),
        });
    Ok(ModelResponse {
        text,
        finish_reason,
        latency_ms,
        token_usage,
    })
}

impl Transport for HttpTransport {
    fn send(&self, req: &ModelRequest) -> Result<ModelResponse, TransportError> {
        let body = serde_json::to_vec(&request_body(req)).expect("request serializes");
        let mut builder = self
            .client
            .post(&self.endpoint)
            .header(CONTENT_TYPE, "application/json")
            .body(body);
        if let Some(key) = &self.api_key {
            builder = builder.bearer_auth(key);
        }
        let started = Instant::now();
        let resp = builder.send().map_err(|e| {
            if e.is_timeout() {
                TransportError::Timeout
            } else {
                TransportError::Connection(e.to_string())
            }
        })?;
        let status = resp.status().as_u16();
        let text = resp.text().map_err(|e| {
            if e.is_timeout() {
                TransportError::Timeout
            } else {
                TransportError::Connection(e.to_string())
            }
        })?;
        let latency_ms = started.elapsed().as_millis() as u64;
        if !(200..300).contains(&status) {
            let body: String = text.chars().take(500).collect();
            return Err(TransportError::Status { status, body });
        }
        parse_body(&text, latency_ms)
    }
}
