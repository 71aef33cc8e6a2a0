//! HTTP calls to expert backends.

use std::time::Duration;

use serde::Deserialize;
use serde_json::json;

use crate::error::ExpertCallError;
use crate::registry::{ExpertEndpoint, Protocol};

const MAX_PROBE_TIMEOUT: Duration = Duration::from_secs(2);

#[derive(Debug, Clone, Default)]
pub struct ExpertClient {
    http: reqwest::Client,
}

#[derive(Deserialize)]
struct SimpleResponse {
    output: String,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatMessage,
}

#[derive(Deserialize)]
struct ChatMessage {
    content: Option<String>,
}

fn classify(err: reqwest::Error) -> ExpertCallError {
    if err.is_timeout() {
        ExpertCallError::Timeout
    } else if let Some(status) = err.status() {
        ExpertCallError::Status(status.as_u16())
    } else if err.is_decode() {
        ExpertCallError::Body(err.to_string())
    } else {
        ExpertCallError::Transport(err.to_string())
    }
}

impl ExpertClient {
    pub fn new() -> Self {
        ExpertClient::default()
    }

    /// Send `prompt` to the expert, retrying up to `max_retries` times.
    pub async fn call(&self, expert: &ExpertEndpoint, prompt: &str) -> Result<String, ExpertCallError> {
        let mut last = ExpertCallError::Timeout;
        for attempt in 0..=expert.max_retries {
            match self.call_once(expert, prompt).await {
                Ok(out) => return Ok(out),
                Err(e) => {
                    tracing::debug!(expert = %expert.name, attempt, error = %e, "expert call failed");
                    last = e;
                }
            }
        }
        Err(last)
    }

    async fn call_once(&self, expert: &ExpertEndpoint, prompt: &str) -> Result<String, ExpertCallError> {
        let timeout = Duration::from_millis(expert.timeout_ms);
        match expert.protocol {
            Protocol::Simple => {
                let resp = self
                    .http
                    .post(expert.join("/generate"))
                    .timeout(timeout)
                    .json(&json!({ "prompt": prompt }))
                    .send()
                    .await
                    .and_then(|r| r.error_for_status())
                    .map_err(classify)?;
                let body: SimpleResponse = resp.json().await.map_err(classify)?;
                Ok(body.output)
            }
            Protocol::Chat => {
                let resp = self
                    .http
                    .post(expert.join("/v1/chat/completions"))
                    .timeout(timeout)
                    .json(&json!({
                        "model": expert.name,
                        "messages": [{ "role": "user", "content": prompt }],
                    }))
                    .send()
                    .await
                    .and_then(|r| r.error_for_status())
                    .map_err(classify)?;
                let body: ChatResponse = resp.json().await.map_err(classify)?;
                body.choices
                    .into_iter()
                    .next()
                    .and_then(|c| c.message.content)
                    .ok_or_else(|| ExpertCallError::Body("no choices[0].message.content".into()))
            }
        }
    }

    /// Lightweight liveness check; any 2xx counts as up.
    pub async fn check_health(&self, expert: &ExpertEndpoint) -> bool {
        let path = match expert.protocol {
            Protocol::Simple => "/healthz",
            Protocol::Chat => "/v1/models",
        };
        let timeout = Duration::from_millis(expert.timeout_ms).min(MAX_PROBE_TIMEOUT);
        matches!(
            self.http.get(expert.join(path)).timeout(timeout).send().await,
            Ok(r) if r.status().is_success()
        )
    }
}
