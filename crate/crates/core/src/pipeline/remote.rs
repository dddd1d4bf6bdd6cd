//! Chat-completion backend over HTTP.
//!
//! Network failures are retried here with exponential backoff; schema
//! failures are the pipeline's business and never seen by this layer.

use std::collections::VecDeque;
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::backend::{AgentBackend, BackendError, BackendKind, ChatMessage, ChatRequest};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EndpointConfig {
    /// Base address; `/chat/completions` is appended.
    pub base_url: String,
    pub model: String,
    /// Environment variable holding the bearer token.
    pub api_key_env: String,
    pub timeout_secs: u64,
    pub max_network_retries: u32,
    pub backoff_ms: u64,
}

impl Default for EndpointConfig {
    fn default() -> Self {
        EndpointConfig {
            base_url: "http://localhost:8000/v1".into(),
            model: "default".into(),
            api_key_env: "OPENAI_API_KEY".into(),
            timeout_secs: 120,
            max_network_retries: 4,
            backoff_ms: 500,
        }
    }
}

/// What one HTTP round-trip can come back with.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TransportOutcome {
    Body(String),
    Status(u16, String),
    Timeout,
    Network(String),
}

pub trait ChatTransport: Send + Sync {
    fn post(&self, url: &str, token: &str, body: &Value, timeout: Duration) -> TransportOutcome;
}

pub struct UreqTransport;

impl ChatTransport for UreqTransport {
    fn post(&self, url: &str, token: &str, body: &Value, timeout: Duration) -> TransportOutcome {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        let response = agent
            .post(url)
            .header("Authorization", &format!("Bearer {token}"))
            .send_json(body);
        match response {
            Ok(mut r) => {
                let status = r.status().as_u16();
                let text = r.body_mut().read_to_string().unwrap_or_default();
                if status == 200 {
                    TransportOutcome::Body(text)
                } else {
                    TransportOutcome::Status(status, text)
                }
            }
            Err(ureq::Error::Timeout(_)) => TransportOutcome::Timeout,
            Err(e) => TransportOutcome::Network(e.to_string()),
        }
    }
}

/// Canned outcomes served in order; for tests and offline replays.
#[derive(Default)]
pub struct FixtureTransport {
    queue: Mutex<VecDeque<TransportOutcome>>,
    seen: Mutex<Vec<Value>>,
}

impl FixtureTransport {
    pub fn new<I: IntoIterator<Item = TransportOutcome>>(outcomes: I) -> FixtureTransport {
        FixtureTransport {
            queue: Mutex::new(outcomes.into_iter().collect()),
            seen: Mutex::new(Vec::new()),
        }
    }

    /// A well-formed completion body carrying `content`.
    pub fn completion(content: &str) -> TransportOutcome {
        TransportOutcome::Body(json!({"choices": [{"message": {"role": "assistant", "content": content}}]}).to_string())
    }

    /// Request bodies received so far.
    pub fn requests(&self) -> Vec<Value> {
        self.seen.lock().unwrap().clone()
    }
}

impl ChatTransport for FixtureTransport {
    fn post(&self, _url: &str, _token: &str, body: &Value, _timeout: Duration) -> TransportOutcome {
        self.seen.lock().unwrap().push(body.clone());
        self.queue
            .lock()
            .unwrap()
            .pop_front()
            .unwrap_or_else(|| TransportOutcome::Network("fixture exhausted".into()))
    }
}

pub struct RemoteChatBackend<T = UreqTransport> {
    identity: String,
    config: EndpointConfig,
    token: String,
    transport: T,
}

impl RemoteChatBackend<UreqTransport> {
    pub fn new(config: EndpointConfig) -> Result<Self, BackendError> {
        RemoteChatBackend::with_transport(config, UreqTransport)
    }
}

impl<T: ChatTransport> RemoteChatBackend<T> {
    /// Reads the credential now, so a missing key fails before any request.
    pub fn with_transport(config: EndpointConfig, transport: T) -> Result<Self, BackendError> {
        let token = std::env::var(&config.api_key_env)
            .map_err(|_| BackendError::AuthFailure(format!("environment variable {} is not set", config.api_key_env)))?;
        Ok(RemoteChatBackend {
            identity: format!("remote:{}", config.model),
            config,
            token,
            transport,
        })
    }

    pub fn transport(&self) -> &T {
        &self.transport
    }

    fn body(&self, messages: &[ChatMessage]) -> Value {
        json!({
            "model": self.config.model,
            "messages": messages,
            "temperature": 0.0,
        })
    }
}

fn content(body: &str) -> Result<String, String> {
    let v: Value = serde_json::from_str(body).map_err(|e| format!("response is not JSON: {e}"))?;
    v.pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| "response has no choices[0].message.content".into())
}

impl<T: ChatTransport> AgentBackend for RemoteChatBackend<T> {
    fn identity(&self) -> &str {
        &self.identity
    }

    fn kind(&self) -> BackendKind {
        BackendKind::RemoteChat
    }

    fn complete(&self, request: &ChatRequest) -> Result<String, BackendError> {
        let url = format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'));
        let body = self.body(&request.messages);
        let timeout = Duration::from_secs(self.config.timeout_secs);
        let mut last = String::new();
        for attempt in 0..=self.config.max_network_retries {
            if attempt > 0 {
                thread::sleep(Duration::from_millis(self.config.backoff_ms << (attempt - 1).min(10)));
            }
            match self.transport.post(&url, &self.token, &body, timeout) {
                TransportOutcome::Body(text) => return content(&text).map_err(BackendError::Unavailable),
                TransportOutcome::Status(code @ (401 | 403), text) => {
                    return Err(BackendError::AuthFailure(format!("HTTP {code}: {text}")))
                }
                TransportOutcome::Status(code, text) if code == 429 || code >= 500 => {
                    last = format!("HTTP {code}: {text}");
                }
                TransportOutcome::Status(code, text) => {
                    return Err(BackendError::Unavailable(format!("HTTP {code}: {text}")))
                }
                TransportOutcome::Timeout => last = "timed out".into(),
                TransportOutcome::Network(e) => last = e,
            }
        }
        Err(BackendError::Unavailable(format!(
            "gave up after {} attempts: {last}",
            self.config.max_network_retries + 1
        )))
    }
}
