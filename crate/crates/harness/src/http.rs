//! HTTP facade over a deployment: the enforcement-point ingress plus
//! operator endpoints (analyser, ledger export, metrics, fault toggles).

use std::collections::HashMap;
use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::json;

use ztbc_core::engine::EngineError;
use ztbc_core::gateway::{GatewayError, GatewayResponse, RawRequest};
use ztbc_core::gateway::AnalyserError;

use crate::deploy::Deployment;

const REQUESTER_HEADER: &str = "x-requester";
const CLIENT_SECRET_HEADER: &str = "x-client-secret";
const ACTOR_HEADER: &str = "x-actor-id";
const API_KEY_HEADER: &str = "x-api-key";

pub fn router(deployment: Arc<Deployment>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/requests", post(submit_request))
        .route("/analyser/engines", get(engine_health))
        .route("/analyser/history/{actor}", get(actor_history))
        .route("/faults/engines/{engine_id}", post(set_engine_fault))
        .route("/ledger/blocks", get(ledger_blocks))
        .route("/metrics", get(metrics))
        .with_state(deployment)
}

/// Binds and serves until the task is cancelled.
pub async fn serve(deployment: Arc<Deployment>, port: u16) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(("0.0.0.0", port)).await?;
    tracing::info!(variant = %deployment.variant, port, "listening");
    axum::serve(listener, router(deployment)).await
}

/// Uniform error envelope for every endpoint.
struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self { status, message: message.into() }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.message }))).into_response()
    }
}

fn error_body(status: StatusCode, message: impl Into<String>) -> Response {
    ApiError::new(status, message).into_response()
}

fn header_text<'h>(headers: &'h HeaderMap, name: &str) -> Result<&'h str, ApiError> {
    match headers.get(name) {
        Some(value) => value.to_str().map_err(|_| {
            ApiError::new(StatusCode::BAD_REQUEST, format!("{name} is not valid text"))
        }),
        None => Err(ApiError::new(StatusCode::BAD_REQUEST, format!("missing {name} header"))),
    }
}

async fn health(State(deployment): State<Arc<Deployment>>) -> Response {
    Json(json!({
        "status": "ok",
        "variant": deployment.variant.label(),
        "engines": deployment.engines.len(),
    }))
    .into_response()
}

async fn submit_request(
    State(deployment): State<Arc<Deployment>>,
    headers: HeaderMap,
    Json(raw): Json<RawRequest>,
) -> Response {
    let requester = match header_text(&headers, REQUESTER_HEADER) {
        Ok(v) => v.to_string(),
        Err(err) => return err.into_response(),
    };
    let secret = match header_text(&headers, CLIENT_SECRET_HEADER) {
        Ok(v) => v.to_string(),
        Err(err) => return err.into_response(),
    };

    match deployment.pep.admit(&requester, &secret, raw).await {
        Ok(response) => {
            let status = match &response {
                GatewayResponse::Granted { .. } => StatusCode::OK,
                GatewayResponse::Accepted { .. } => StatusCode::ACCEPTED,
                GatewayResponse::Rejected { .. } => StatusCode::FORBIDDEN,
            };
            (status, Json(response)).into_response()
        }
        Err(GatewayError::BadClientSecret) => {
            error_body(StatusCode::UNAUTHORIZED, "client secret mismatch")
        }
        Err(err @ GatewayError::Header(_)) => error_body(StatusCode::BAD_REQUEST, err.to_string()),
        Err(err @ GatewayError::MissingCredentials(_)) => {
            error_body(StatusCode::BAD_REQUEST, err.to_string())
        }
    }
}

fn analyser_error(err: AnalyserError) -> Response {
    let status = match err {
        AnalyserError::Denied => StatusCode::FORBIDDEN,
        AnalyserError::Unavailable(_) => StatusCode::SERVICE_UNAVAILABLE,
        AnalyserError::NotSupported => StatusCode::NOT_IMPLEMENTED,
    };
    error_body(status, err.to_string())
}

fn operator_credentials(headers: &HeaderMap) -> Result<(String, String), ApiError> {
    Ok((
        header_text(headers, ACTOR_HEADER)?.to_string(),
        header_text(headers, API_KEY_HEADER)?.to_string(),
    ))
}

async fn engine_health(
    State(deployment): State<Arc<Deployment>>,
    headers: HeaderMap,
) -> Response {
    let (actor, key) = match operator_credentials(&headers) {
        Ok(pair) => pair,
        Err(err) => return err.into_response(),
    };
    match deployment.analyser.engine_health(&actor, &key) {
        Ok(health) => Json(health).into_response(),
        Err(err) => analyser_error(err),
    }
}

#[derive(Debug, Deserialize)]
struct HistoryQuery {
    #[serde(default = "default_history_limit")]
    limit: usize,
}

fn default_history_limit() -> usize {
    20
}

async fn actor_history(
    State(deployment): State<Arc<Deployment>>,
    Path(actor): Path<String>,
    Query(query): Query<HistoryQuery>,
    headers: HeaderMap,
) -> Response {
    let (operator, key) = match operator_credentials(&headers) {
        Ok(pair) => pair,
        Err(err) => return err.into_response(),
    };
    match deployment.analyser.actor_history(&operator, &key, &actor, query.limit) {
        Ok(records) => Json(records).into_response(),
        Err(err) => analyser_error(err),
    }
}

#[derive(Debug, Deserialize)]
struct FaultBody {
    compromised: bool,
}

async fn set_engine_fault(
    State(deployment): State<Arc<Deployment>>,
    Path(engine_id): Path<String>,
    Json(body): Json<FaultBody>,
) -> Response {
    match deployment.inject_fault(&engine_id, body.compromised) {
        Ok(()) => Json(json!({ "engine": engine_id, "compromised": body.compromised }))
            .into_response(),
        Err(err @ EngineError::UnknownEngine(_)) => {
            error_body(StatusCode::NOT_FOUND, err.to_string())
        }
        Err(err) => error_body(StatusCode::FORBIDDEN, err.to_string()),
    }
}

#[derive(Debug, Deserialize)]
struct BlocksQuery {
    /// Peer to read from; defaults to the monitoring peer.
    peer: Option<String>,
}

async fn ledger_blocks(
    State(deployment): State<Arc<Deployment>>,
    Query(query): Query<BlocksQuery>,
) -> Response {
    let Some(ledger) = deployment.ledger.as_ref() else {
        return error_body(StatusCode::NOT_FOUND, "this deployment runs without a ledger");
    };
    let peers = ledger.peer_ids();
    let peer = query
        .peer
        .or_else(|| peers.get(1).cloned())
        .or_else(|| peers.first().cloned())
        .unwrap_or_default();
    let client = match ledger.client(&peer) {
        Ok(client) => client,
        Err(err) => return error_body(StatusCode::NOT_FOUND, err.to_string()),
    };
    match client.export() {
        Ok(blocks) => Json(blocks).into_response(),
        Err(err) => error_body(StatusCode::SERVICE_UNAVAILABLE, err.to_string()),
    }
}

async fn metrics(State(deployment): State<Arc<Deployment>>) -> Response {
    Json(deployment.metrics.snapshot()).into_response()
}

/// Query-string helper used by the CLI client: turns loose key=value pairs
/// into the request parameter map.
pub fn parse_parameters(pairs: &[String]) -> Result<HashMap<String, String>, String> {
    pairs
        .iter()
        .map(|pair| {
            pair.split_once('=')
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .ok_or_else(|| format!("parameter `{pair}` is not key=value"))
        })
        .collect()
}
