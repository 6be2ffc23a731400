//! OpenAI-compatible HTTP front end plus the offer endpoints.

use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::{json, Value};

use crate::engine::{GatewayError, OfferError};
use crate::gateway::{now_ms, Gateway};
use crate::wire::{ChatRequest, ChatResponse};

pub fn router(gateway: Gateway) -> Router {
    Router::new()
        .route("/v1/chat/completions", post(chat))
        .route("/offers", get(list_offers).post(decide_offer))
        .route("/tasks", get(list_tasks))
        .route("/healthz", get(|| async { "ok" }))
        .with_state(gateway)
}

/// Serves until ctrl-c.
pub async fn serve(gateway: Gateway, listen: &str) -> anyhow::Result<()> {
    let listener = tokio::net::TcpListener::bind(listen).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(gateway))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}

fn error(status: StatusCode, kind: &str, message: String) -> Response {
    (status, Json(json!({ "error": { "type": kind, "message": message } }))).into_response()
}

pub fn completion_body(resp: &ChatResponse, model: &str) -> Value {
    json!({
        "id": resp.request_id,
        "object": "chat.completion",
        "created": now_ms() / 1000,
        "model": model,
        "choices": [{
            "index": 0,
            "message": { "role": "assistant", "content": resp.content },
            "finish_reason": "stop",
        }],
        "usage": {
            "prompt_tokens": resp.prompt_tokens,
            "completion_tokens": resp.completion_tokens,
            "total_tokens": resp.prompt_tokens + resp.completion_tokens,
        },
        "jitr": {
            "served_by": resp.served_by,
            "upstream_latency_ms": resp.upstream_latency_ms,
            "task_id": resp.task_id,
        },
    })
}

async fn chat(State(gw): State<Gateway>, body: Result<Json<ChatRequest>, axum::extract::rejection::JsonRejection>) -> Response {
    let Json(mut req) = match body {
        Ok(b) => b,
        Err(e) => return error(StatusCode::BAD_REQUEST, "invalid_request_error", e.body_text()),
    };
    req.received_at = now_ms();
    let model = req.model.clone();
    let result = tokio::task::spawn_blocking(move || gw.handle(req)).await;
    match result {
        Ok(Ok(resp)) => Json(completion_body(&resp, &model)).into_response(),
        Ok(Err(GatewayError::BadRequest(m))) => error(StatusCode::BAD_REQUEST, "invalid_request_error", m),
        Ok(Err(e @ GatewayError::Upstream { .. })) => error(StatusCode::BAD_GATEWAY, "upstream_error", e.to_string()),
        Ok(Err(e)) => error(StatusCode::INTERNAL_SERVER_ERROR, "internal_error", e.to_string()),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, "internal_error", e.to_string()),
    }
}

async fn list_offers(State(gw): State<Gateway>) -> Response {
    Json(gw.offers()).into_response()
}

async fn list_tasks(State(gw): State<Gateway>) -> Response {
    let e = gw.engine();
    let views: Vec<_> = e.state().tasks.keys().filter_map(|&t| e.task_view(t)).collect();
    Json(views).into_response()
}

#[derive(Debug, Deserialize)]
struct Decision {
    offer_id: u64,
    action: String,
}

async fn decide_offer(State(gw): State<Gateway>, body: Result<Json<Decision>, axum::extract::rejection::JsonRejection>) -> Response {
    let Json(d) = match body {
        Ok(b) => b,
        Err(e) => return error(StatusCode::BAD_REQUEST, "invalid_request_error", e.body_text()),
    };
    let accept = match d.action.as_str() {
        "accept" => true,
        "reject" => false,
        other => {
            return error(StatusCode::BAD_REQUEST, "invalid_request_error", format!("action must be accept or reject, not `{other}`"))
        }
    };
    match tokio::task::spawn_blocking(move || gw.decide_offer(d.offer_id, accept)).await {
        Ok(Ok(offer)) => Json(offer).into_response(),
        Ok(Err(e @ OfferError::Unknown(_))) => error(StatusCode::NOT_FOUND, "not_found", e.to_string()),
        Ok(Err(e)) => error(StatusCode::CONFLICT, "conflict", e.to_string()),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, "internal_error", e.to_string()),
    }
}
