use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use super::{Backend, Completion, GatewayError, RequestId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub backoff_ms: u64,
    pub max_backoff_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 4,
            backoff_ms: 500,
            max_backoff_ms: 30_000,
        }
    }
}

impl RetryPolicy {
    /// Delay before attempt `attempt + 1` (1-based `attempt`).
    pub fn delay(&self, attempt: u32) -> Duration {
        let factor = 1u64 << (attempt.saturating_sub(1)).min(20);
        Duration::from_millis(self.backoff_ms.saturating_mul(factor).min(self.max_backoff_ms))
    }
}

/// Endpoint settings. The bearer token itself is never stored: only the
/// name of the environment variable it is read from at request time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HttpConfig {
    pub endpoint_url: String,
    pub model_name: String,
    #[serde(default)]
    pub auth_token_env_var: Option<String>,
    #[serde(default = "default_timeout")]
    pub timeout_ms: u64,
    #[serde(default)]
    pub retry: RetryPolicy,
    /// Passed through into the request body (temperature, max_tokens, ...).
    #[serde(default)]
    pub params: Map<String, Value>,
}

fn default_timeout() -> u64 {
    60_000
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TransportError {
    #[error("status {code}: {body}")]
    Status { code: u16, body: String },
    #[error("timeout")]
    Timeout,
    #[error("{0}")]
    Io(String),
}

impl TransportError {
    fn retryable(&self) -> bool {
        match self {
            TransportError::Status { code, .. } => *code == 429 || *code >= 500,
            TransportError::Timeout | TransportError::Io(_) => true,
        }
    }
}

pub trait Transport: Send + Sync {
    fn post_json(&self, url: &str, body: &Value, bearer: Option<&str>, timeout: Duration) -> Result<String, TransportError>;
}

pub struct ReqwestTransport {
    client: reqwest::blocking::Client,
}

impl ReqwestTransport {
    pub fn new() -> Result<Self, GatewayError> {
        let client = reqwest::blocking::Client::builder()
            .build()
            .map_err(|e| GatewayError::Config(e.to_string()))?;
        Ok(Self { client })
    }
}

impl Transport for ReqwestTransport {
    fn post_json(&self, url: &str, body: &Value, bearer: Option<&str>, timeout: Duration) -> Result<String, TransportError> {
        let mut req = self.client.post(url).timeout(timeout).json(body);
        if let Some(t) = bearer {
            req = req.bearer_auth(t);
        }
        let resp = req.send().map_err(|e| {
            if e.is_timeout() {
                TransportError::Timeout
            } else {
                TransportError::Io(e.without_url().to_string())
            }
        })?;
        let status = resp.status();
        let text = resp.text().map_err(|e| TransportError::Io(e.without_url().to_string()))?;
        if status.is_success() {
            Ok(text)
        } else {
            Err(TransportError::Status {
                code: status.as_u16(),
                body: text.chars().take(500).collect(),
            })
        }
    }
}

type Sleeper = Arc<dyn Fn(Duration) + Send + Sync>;

/// OpenAI-style chat-completion client with exponential-backoff retries on
/// 429, 5xx, timeouts and connection errors.
pub struct ChatBackend {
    name: String,
    config: HttpConfig,
    transport: Arc<dyn Transport>,
    sleep: Sleeper,
}

impl ChatBackend {
    pub fn new(name: impl Into<String>, config: HttpConfig, transport: Arc<dyn Transport>) -> Self {
        Self {
            name: name.into(),
            config,
            transport,
            sleep: Arc::new(std::thread::sleep),
        }
    }

    pub fn with_sleeper(mut self, sleep: impl Fn(Duration) + Send + Sync + 'static) -> Self {
        self.sleep = Arc::new(sleep);
        self
    }

    fn body(&self, prompt: &str) -> Value {
        let mut body = self.config.params.clone();
        body.insert("model".into(), json!(self.config.model_name));
        body.insert("messages".into(), json!([{"role": "user", "content": prompt}]));
        Value::Object(body)
    }
}

fn extract_text(raw: &str) -> Result<String, GatewayError> {
    let v: Value = serde_json::from_str(raw).map_err(|e| GatewayError::BadResponse(e.to_string()))?;
    let choice = v.get("choices").and_then(|c| c.get(0));
    choice
        .and_then(|c| c.pointer("/message/content").or_else(|| c.get("text")))
        .or_else(|| v.get("content"))
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| GatewayError::BadResponse("no message content".into()))
}

impl Backend for ChatBackend {
    fn name(&self) -> &str {
        &self.name
    }

    fn complete(&self, prompt: &str, request: &RequestId) -> Result<Completion, GatewayError> {
        let body = self.body(prompt);
        let timeout = Duration::from_millis(self.config.timeout_ms);
        let max = self.config.retry.max_attempts.max(1);
        let mut attempt = 0;
        loop {
            attempt += 1;
            let token = self.config.auth_token_env_var.as_deref().and_then(|v| std::env::var(v).ok());
            match self.transport.post_json(&self.config.endpoint_url, &body, token.as_deref(), timeout) {
                Ok(raw) => {
                    return Ok(Completion {
                        text: extract_text(&raw)?,
                        attempts: attempt,
                    })
                }
                Err(e) if e.retryable() && attempt < max => {
                    log::warn!("{request}: attempt {attempt} failed ({e}), retrying");
                    (self.sleep)(self.config.retry.delay(attempt));
                }
                Err(e) if !e.retryable() => {
                    return Err(match e {
                        TransportError::Status { code, body } => GatewayError::EndpointError { status: code, body },
                        other => GatewayError::BadResponse(other.to_string()),
                    })
                }
                Err(TransportError::Timeout) if max == 1 => return Err(GatewayError::Timeout),
                Err(e) => {
                    return Err(GatewayError::RetriesExhausted {
                        attempts: attempt,
                        last: e.to_string(),
                    })
                }
            }
        }
    }
}
