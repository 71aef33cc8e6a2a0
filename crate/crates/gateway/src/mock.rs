//! Mock expert backend for tests and local demos.
//!
//! Speaks both the simple and the chat protocol. Failure injection makes
//! every generation and health request return 500/503 until cleared.

use std::net::SocketAddr;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::{json, Value};
use tokio::net::TcpListener;
use tokio::sync::oneshot;
use tokio::task::JoinHandle;

#[derive(Debug, Clone, Default)]
pub struct MockExpertConfig {
    pub name: String,
    /// Fixed reply; when unset the reply is `"[<name>] <prompt>"`.
    pub output: Option<String>,
    pub fail: bool,
    pub delay: Duration,
}

impl MockExpertConfig {
    pub fn named(name: impl Into<String>) -> Self {
        MockExpertConfig {
            name: name.into(),
            ..Default::default()
        }
    }
}

#[derive(Debug)]
struct MockState {
    config: MockExpertConfig,
    failing: AtomicBool,
    calls: AtomicUsize,
}

impl MockState {
    fn reply(&self, prompt: &str) -> String {
        match &self.config.output {
            Some(out) => out.clone(),
            None => format!("[{}] {}", self.config.name, prompt),
        }
    }

    async fn before_call(&self) -> Result<(), Response> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        if !self.config.delay.is_zero() {
            tokio::time::sleep(self.config.delay).await;
        }
        if self.failing.load(Ordering::SeqCst) {
            Err((StatusCode::INTERNAL_SERVER_ERROR, Json(json!({ "error": "injected failure" }))).into_response())
        } else {
            Ok(())
        }
    }
}

#[derive(Deserialize)]
struct GenerateBody {
    prompt: String,
}

async fn generate(State(s): State<Arc<MockState>>, Json(body): Json<GenerateBody>) -> Response {
    if let Err(resp) = s.before_call().await {
        return resp;
    }
    Json(json!({ "output": s.reply(&body.prompt) })).into_response()
}

async fn chat(State(s): State<Arc<MockState>>, Json(body): Json<Value>) -> Response {
    if let Err(resp) = s.before_call().await {
        return resp;
    }
    let prompt = body["messages"]
        .as_array()
        .and_then(|m| m.iter().rev().find(|m| m["role"] == "user"))
        .and_then(|m| m["content"].as_str())
        .unwrap_or_default();
    Json(json!({
        "id": "mock",
        "object": "chat.completion",
        "model": s.config.name,
        "choices": [{
            "index": 0,
            "message": { "role": "assistant", "content": s.reply(prompt) },
            "finish_reason": "stop",
        }],
    }))
    .into_response()
}

async fn healthz(State(s): State<Arc<MockState>>) -> StatusCode {
    if s.failing.load(Ordering::SeqCst) {
        StatusCode::SERVICE_UNAVAILABLE
    } else {
        StatusCode::OK
    }
}

async fn models(State(s): State<Arc<MockState>>) -> Response {
    if s.failing.load(Ordering::SeqCst) {
        return StatusCode::SERVICE_UNAVAILABLE.into_response();
    }
    Json(json!({ "object": "list", "data": [{ "id": s.config.name, "object": "model" }] })).into_response()
}

fn mock_app(state: Arc<MockState>) -> Router {
    Router::new()
        .route("/generate", post(generate))
        .route("/v1/chat/completions", post(chat))
        .route("/v1/models", get(models))
        .route("/healthz", get(healthz))
        .with_state(state)
}

/// A running mock expert. Dropping the handle stops the server.
#[derive(Debug)]
pub struct MockExpert {
    addr: SocketAddr,
    state: Arc<MockState>,
    shutdown: Option<oneshot::Sender<()>>,
    task: Option<JoinHandle<()>>,
}

impl MockExpert {
    /// Bind `addr` (use port 0 for an ephemeral port) and start serving.
    pub async fn spawn(config: MockExpertConfig, addr: &str) -> std::io::Result<Self> {
        let listener = TcpListener::bind(addr).await?;
        let addr = listener.local_addr()?;
        let state = Arc::new(MockState {
            failing: AtomicBool::new(config.fail),
            calls: AtomicUsize::new(0),
            config,
        });
        let (tx, rx) = oneshot::channel::<()>();
        let app = mock_app(state.clone());
        let task = tokio::spawn(async move {
            let _ = axum::serve(listener, app)
                .with_graceful_shutdown(async {
                    let _ = rx.await;
                })
                .await;
        });
        Ok(MockExpert {
            addr,
            state,
            shutdown: Some(tx),
            task: Some(task),
        })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn name(&self) -> &str {
        &self.state.config.name
    }

    pub fn set_failing(&self, failing: bool) {
        self.state.failing.store(failing, Ordering::SeqCst);
    }

    /// Generation requests received so far, failed ones included.
    pub fn calls(&self) -> usize {
        self.state.calls.load(Ordering::SeqCst)
    }

    pub async fn stop(mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(task) = self.task.take() {
            let _ = task.await;
        }
    }

    /// Serve until the process is interrupted.
    pub async fn run_until_ctrl_c(mut self) {
        let _ = tokio::signal::ctrl_c().await;
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(task) = self.task.take() {
            let _ = task.await;
        }
    }
}

impl Drop for MockExpert {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
    }
}
