//! Agent backends: anything that turns a chat request into response text.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::Role;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BackendKind {
    RemoteChat,
    Scripted,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> ChatMessage {
        ChatMessage {
            role: "system".into(),
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> ChatMessage {
        ChatMessage {
            role: "user".into(),
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> ChatMessage {
        ChatMessage {
            role: "assistant".into(),
            content: content.into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatRequest {
    /// The pipeline role the request is for.
    pub agent: Role,
    pub messages: Vec<ChatMessage>,
}

impl ChatRequest {
    /// The first user message: the rendered problem instance.
    pub fn instance(&self) -> Option<&str> {
        self.messages
            .iter()
            .find(|m| m.role == "user")
            .map(|m| m.content.as_str())
    }

    /// Stable lookup key for recorded fixtures.
    pub fn key(&self) -> String {
        serde_json::to_string(self).expect("chat requests serialize")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BackendError {
    #[error("backend unavailable: {0}")]
    Unavailable(String),
    #[error("authentication failed: {0}")]
    AuthFailure(String),
}

pub trait AgentBackend: Send + Sync {
    fn identity(&self) -> &str;
    fn kind(&self) -> BackendKind;
    fn complete(&self, request: &ChatRequest) -> Result<String, BackendError>;
}

/// A backend driven by a closure. Deterministic as long as the closure is.
pub struct ScriptedBackend<F> {
    identity: String,
    respond: F,
}

impl<F> ScriptedBackend<F>
where
    F: Fn(&ChatRequest) -> Result<String, BackendError> + Send + Sync,
{
    pub fn new(identity: impl Into<String>, respond: F) -> ScriptedBackend<F> {
        ScriptedBackend {
            identity: identity.into(),
            respond,
        }
    }
}

impl<F> AgentBackend for ScriptedBackend<F>
where
    F: Fn(&ChatRequest) -> Result<String, BackendError> + Send + Sync,
{
    fn identity(&self) -> &str {
        &self.identity
    }

    fn kind(&self) -> BackendKind {
        BackendKind::Scripted
    }

    fn complete(&self, request: &ChatRequest) -> Result<String, BackendError> {
        (self.respond)(request)
    }
}

/// Replays responses recorded against exact requests.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct ReplayBackend {
    pub identity: String,
    pub responses: BTreeMap<String, String>,
}

impl AgentBackend for ReplayBackend {
    fn identity(&self) -> &str {
        &self.identity
    }

    fn kind(&self) -> BackendKind {
        BackendKind::Scripted
    }

    fn complete(&self, request: &ChatRequest) -> Result<String, BackendError> {
        self.responses
            .get(&request.key())
            .cloned()
            .ok_or_else(|| BackendError::Unavailable("no recorded response for request".into()))
    }
}

/// Passes requests through and keeps every successful exchange, so a run
/// can be replayed later through a [`ReplayBackend`].
pub struct RecordingBackend {
    inner: Arc<dyn AgentBackend>,
    log: Mutex<BTreeMap<String, String>>,
}

impl RecordingBackend {
    pub fn new(inner: Arc<dyn AgentBackend>) -> RecordingBackend {
        RecordingBackend {
            inner,
            log: Mutex::new(BTreeMap::new()),
        }
    }

    pub fn replay(&self) -> ReplayBackend {
        ReplayBackend {
            identity: self.inner.identity().to_string(),
            responses: self.log.lock().unwrap().clone(),
        }
    }
}

impl AgentBackend for RecordingBackend {
    fn identity(&self) -> &str {
        self.inner.identity()
    }

    fn kind(&self) -> BackendKind {
        self.inner.kind()
    }

    fn complete(&self, request: &ChatRequest) -> Result<String, BackendError> {
        let out = self.inner.complete(request)?;
        self.log.lock().unwrap().insert(request.key(), out.clone());
        Ok(out)
    }
}

/// Backend assignment per role. The reviser falls back to the student's backend.
#[derive(Clone, Default)]
pub struct Backends {
    by_role: BTreeMap<Role, Arc<dyn AgentBackend>>,
}

impl fmt::Debug for Backends {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_map()
            .entries(self.by_role.iter().map(|(r, b)| (r, b.identity())))
            .finish()
    }
}

impl Backends {
    pub fn uniform(backend: Arc<dyn AgentBackend>) -> Backends {
        let mut b = Backends::default();
        for role in Role::ALL {
            b.by_role.insert(role, backend.clone());
        }
        b
    }

    pub fn with(mut self, role: Role, backend: Arc<dyn AgentBackend>) -> Backends {
        self.by_role.insert(role, backend);
        self
    }

    pub fn get(&self, role: Role) -> Option<&Arc<dyn AgentBackend>> {
        self.by_role.get(&role).or_else(|| match role {
            Role::Reviser => self.by_role.get(&Role::Student),
            _ => None,
        })
    }
}
