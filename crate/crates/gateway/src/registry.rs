use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::GatewayError;

pub const DEFAULT_TIMEOUT_MS: u64 = 30_000;

/// Wire protocol an expert speaks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    /// `POST {url}/generate {"prompt"}` → `{"output"}`; health at `GET {url}/healthz`.
    #[default]
    Simple,
    /// Chat-completions shape at `POST {url}/v1/chat/completions`; health at `GET {url}/v1/models`.
    Chat,
}

fn default_timeout_ms() -> u64 {
    DEFAULT_TIMEOUT_MS
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpertEndpoint {
    pub name: String,
    pub url: String,
    #[serde(default)]
    pub protocol: Protocol,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default)]
    pub max_retries: u32,
}

impl ExpertEndpoint {
    pub fn simple(name: impl Into<String>, url: impl Into<String>) -> Self {
        ExpertEndpoint {
            name: name.into(),
            url: url.into(),
            protocol: Protocol::Simple,
            timeout_ms: DEFAULT_TIMEOUT_MS,
            max_retries: 0,
        }
    }

    pub(crate) fn join(&self, path: &str) -> String {
        format!("{}{}", self.url.trim_end_matches('/'), path)
    }
}

/// The set of expert backends the gateway may dispatch to.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Registry {
    pub experts: Vec<ExpertEndpoint>,
}

impl Registry {
    pub fn new(experts: Vec<ExpertEndpoint>) -> Result<Self, GatewayError> {
        let registry = Registry { experts };
        registry.validate()?;
        Ok(registry)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, GatewayError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| GatewayError::Config(format!("{}: {e}", path.display())))?;
        let registry: Registry = serde_json::from_str(&text)
            .map_err(|e| GatewayError::Config(format!("{}: {e}", path.display())))?;
        registry.validate()?;
        Ok(registry)
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        let mut names = HashSet::new();
        for e in &self.experts {
            if !names.insert(e.name.as_str()) {
                return Err(GatewayError::Config(format!("duplicate expert `{}`", e.name)));
            }
            let url = reqwest::Url::parse(&e.url)
                .map_err(|err| GatewayError::Config(format!("expert `{}`: bad url: {err}", e.name)))?;
            if !matches!(url.scheme(), "http" | "https") {
                return Err(GatewayError::Config(format!(
                    "expert `{}`: unsupported scheme `{}`",
                    e.name,
                    url.scheme()
                )));
            }
            if e.timeout_ms == 0 {
                return Err(GatewayError::Config(format!("expert `{}`: timeout_ms must be positive", e.name)));
            }
        }
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&ExpertEndpoint> {
        self.experts.iter().find(|e| e.name == name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.experts.iter().map(|e| e.name.as_str())
    }

    pub fn is_empty(&self) -> bool {
        self.experts.is_empty()
    }
}
