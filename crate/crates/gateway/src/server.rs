//! HTTP front end of the gateway.

use std::future::Future;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use coe_core::{load_leaderboard, load_params};
use serde::Deserialize;
use serde_json::json;
use tokio::net::TcpListener;

use crate::dispatch::{Gateway, RouterMode};
use crate::error::GatewayError;
use crate::health::{HealthCache, DEFAULT_HEALTH_TTL};
use crate::registry::Registry;

/// Where the router parameters come from.
#[derive(Debug, Clone)]
pub enum RouterSource {
    Direct { params: PathBuf },
    TwoStage { subject_params: PathBuf, leaderboard: PathBuf },
}

#[derive(Debug, Clone)]
pub struct ServeConfig {
    pub addr: String,
    pub experts: PathBuf,
    pub router: RouterSource,
    pub health_ttl: Duration,
}

impl ServeConfig {
    pub fn new(addr: impl Into<String>, experts: impl Into<PathBuf>, router: RouterSource) -> Self {
        ServeConfig {
            addr: addr.into(),
            experts: experts.into(),
            router,
            health_ttl: DEFAULT_HEALTH_TTL,
        }
    }

    pub fn build_gateway(&self) -> Result<Gateway, GatewayError> {
        let registry = Registry::load(&self.experts)?;
        let mode = match &self.router {
            RouterSource::Direct { params } => RouterMode::direct(load_params(params)?),
            RouterSource::TwoStage {
                subject_params,
                leaderboard,
            } => RouterMode::two_stage(load_params(subject_params)?, load_leaderboard(leaderboard)?),
        };
        Ok(Gateway::new(registry, mode, HealthCache::new(self.health_ttl)))
    }
}

#[derive(Deserialize)]
struct QueryBody {
    text: Option<String>,
}

fn error_response(status: StatusCode, message: impl ToString) -> Response {
    (status, Json(json!({ "error": message.to_string() }))).into_response()
}

fn parse_text(body: &Bytes) -> Option<String> {
    serde_json::from_slice::<QueryBody>(body).ok().and_then(|b| b.text)
}

fn bad_request() -> Response {
    error_response(StatusCode::BAD_REQUEST, "request body must be {\"text\": \"...\"}")
}

fn status_for(err: &GatewayError) -> StatusCode {
    match err {
        GatewayError::NoExpertAvailable { .. } | GatewayError::AllExpertsFailed { .. } => StatusCode::BAD_GATEWAY,
        _ => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

async fn query(State(gw): State<Arc<Gateway>>, body: Bytes) -> Response {
    let Some(text) = parse_text(&body) else {
        return bad_request();
    };
    match gw.dispatch(&text).await {
        Ok(routed) => Json(routed).into_response(),
        Err(e) => error_response(status_for(&e), e),
    }
}

async fn dry_route(State(gw): State<Arc<Gateway>>, body: Bytes) -> Response {
    let Some(text) = parse_text(&body) else {
        return bad_request();
    };
    match gw.decide(&text) {
        Ok(d) => Json(json!({ "model": d.model(), "distribution": d.distribution })).into_response(),
        Err(e) => error_response(StatusCode::INTERNAL_SERVER_ERROR, e),
    }
}

async fn healthz(State(gw): State<Arc<Gateway>>) -> Response {
    let experts = gw.probe().await;
    Json(json!({ "status": "ok", "experts": experts })).into_response()
}

pub fn app(gateway: Arc<Gateway>) -> Router {
    Router::new()
        .route("/v1/query", post(query))
        .route("/v1/route", post(dry_route))
        .route("/healthz", get(healthz))
        .with_state(gateway)
}

/// Serve on an already-bound listener until `shutdown` resolves, then
/// drain in-flight requests.
pub async fn serve_on(
    listener: TcpListener,
    gateway: Arc<Gateway>,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> Result<(), GatewayError> {
    axum::serve(listener, app(gateway))
        .with_graceful_shutdown(shutdown)
        .await
        .map_err(GatewayError::Server)
}

/// Load config files, bind, and serve until Ctrl-C.
pub async fn serve(config: ServeConfig) -> Result<(), GatewayError> {
    let gateway = Arc::new(config.build_gateway()?);
    let listener = TcpListener::bind(&config.addr).await.map_err(|source| GatewayError::Bind {
        addr: config.addr.clone(),
        source,
    })?;
    tracing::info!(addr = %listener.local_addr()?, "gateway listening");
    serve_on(listener, gateway, async {
        let _ = tokio::signal::ctrl_c().await;
    })
    .await
}
