//! Harness configuration, read from TOML or JSON by file extension.
//!
//! Credentials never live here; an endpoint names the environment variable
//! that holds its key.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use prooftutor::pipeline::backend::{AgentBackend, BackendError, Backends};
use prooftutor::pipeline::remote::{EndpointConfig, RemoteChatBackend};
use prooftutor::pipeline::scripted::SymbolicAgent;
use prooftutor::{ComplexityConstants, KgBounds, Role};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HarnessConfig {
    pub bounds: KgBounds,
    pub complexity: ComplexityConstants<f64>,
    pub concurrency: usize,
    pub session_ttl_secs: u64,
    pub backend: BackendConfig,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        HarnessConfig {
            bounds: KgBounds::default(),
            complexity: ComplexityConstants::default(),
            concurrency: 4,
            session_ttl_secs: 2 * 60 * 60,
            backend: BackendConfig::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendChoice {
    #[default]
    Symbolic,
    Remote,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendConfig {
    pub kind: BackendChoice,
    /// Seed for the symbolic agent.
    pub seed: u64,
    pub endpoint: EndpointConfig,
    /// Per-role endpoint overrides, keyed by role name.
    pub roles: BTreeMap<Role, EndpointConfig>,
}

impl BackendConfig {
    /// Remote backends read their keys here, before any work starts.
    pub fn backends(&self) -> Result<Backends, BackendError> {
        match self.kind {
            BackendChoice::Symbolic => Ok(Backends::uniform(Arc::new(SymbolicAgent::new("symbolic-v1", self.seed)))),
            BackendChoice::Remote => {
                let mut b = Backends::default();
                for role in Role::ALL {
                    let endpoint = self.roles.get(&role).unwrap_or(&self.endpoint).clone();
                    let backend: Arc<dyn AgentBackend> = Arc::new(RemoteChatBackend::new(endpoint)?);
                    b = b.with(role, backend);
                }
                Ok(b)
            }
        }
    }
}

impl HarnessConfig {
    pub fn load(path: &Path) -> Result<HarnessConfig, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let is_json = path.extension().is_some_and(|e| e == "json");
        let parsed = if is_json {
            serde_json::from_str(&text).map_err(|e| e.to_string())
        } else {
            toml::from_str(&text).map_err(|e| e.to_string())
        };
        let config: HarnessConfig = parsed.map_err(|e| format!("{}: {e}", path.display()))?;
        config
            .complexity
            .validate()
            .map_err(|e| format!("{}: {e}", path.display()))?;
        Ok(config)
    }
}
