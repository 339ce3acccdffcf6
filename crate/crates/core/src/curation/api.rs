//! JSON-over-HTTP surface of the review service.
//!
//! | method | path              | who    | body / query                                   |
//! |--------|-------------------|--------|------------------------------------------------|
//! | GET    | `/queue`          | any    | `kind`, `topic`, `polarity`, `size`, `status`  |
//! | POST   | `/decisions`      | any    | `{"item","verdict",("text"|"reason")}`         |
//! | POST   | `/expert/resolve` | expert | `{"item","verdict",("text"),("relabel")}`      |
//! | GET    | `/stats`          | any    |                                                |
//! | POST   | `/finalize`       | expert | `{"force"}`                                    |
//!
//! Requests carry `Authorization: Bearer <token>`. Errors are
//! `{"error": <code>, "message": <text>}`.

use std::collections::HashMap;
use std::str::FromStr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::json;

use super::{Annotator, CurationError, CurationService, QueueFilter, QueueStatus, Verdict};
use crate::chain_model::{normalize_emotion, NodeId, NodeKind, Polarity, Topic};

const DEFAULT_BATCH: usize = 10;
const MAX_BATCH: usize = 200;

struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code,
            message: message.into(),
        }
    }

    fn invalid(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "validation", message)
    }
}

impl From<CurationError> for ApiError {
    fn from(e: CurationError) -> Self {
        let (status, code) = match &e {
            CurationError::UnknownItem(_) => (StatusCode::NOT_FOUND, "unknown_item"),
            CurationError::StaleClaim(_) => (StatusCode::CONFLICT, "stale_claim"),
            CurationError::AlreadyDecided(_) => (StatusCode::CONFLICT, "already_decided"),
            CurationError::AwaitingExpert(_) => (StatusCode::CONFLICT, "awaiting_expert"),
            CurationError::NotFlagged(_) => (StatusCode::CONFLICT, "not_flagged"),
            CurationError::PendingItemsRemain(_) => (StatusCode::CONFLICT, "pending_items_remain"),
            CurationError::RoleDenied(_) => (StatusCode::FORBIDDEN, "role_denied"),
            CurationError::UnknownAnnotator => (StatusCode::UNAUTHORIZED, "unauthorized"),
            CurationError::LabelPolarityMismatch { .. } => {
                (StatusCode::UNPROCESSABLE_ENTITY, "label_polarity_mismatch")
            }
            CurationError::Validation(_) => (StatusCode::UNPROCESSABLE_ENTITY, "validation"),
            CurationError::Store(_) | CurationError::Pipeline(_) | CurationError::Log { .. } => {
                (StatusCode::INTERNAL_SERVER_ERROR, "internal")
            }
        };
        ApiError::new(status, code, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (
            self.status,
            Json(json!({ "error": self.code, "message": self.message })),
        )
            .into_response()
    }
}

type Shared = Arc<CurationService>;

fn authenticate<'a>(svc: &'a CurationService, headers: &HeaderMap) -> Result<&'a Annotator, ApiError> {
    let token = headers
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "))
        .map(str::trim)
        .ok_or_else(|| ApiError::new(StatusCode::UNAUTHORIZED, "unauthorized", "missing bearer token"))?;
    svc.authenticate(token)
        .ok_or_else(|| ApiError::new(StatusCode::UNAUTHORIZED, "unauthorized", "unknown token"))
}

fn parse_body<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::invalid(format!("malformed body: {e}")))
}

fn parse_param<T: FromStr>(params: &HashMap<String, String>, key: &str) -> Result<Option<T>, ApiError>
where
    T::Err: std::fmt::Display,
{
    match params.get(key).map(String::as_str) {
        None | Some("") => Ok(None),
        Some(v) => v
            .parse()
            .map(Some)
            .map_err(|e| ApiError::invalid(format!("query parameter `{key}`: {e}"))),
    }
}

async fn queue(
    State(svc): State<Shared>,
    headers: HeaderMap,
    Query(params): Query<HashMap<String, String>>,
) -> Result<Response, ApiError> {
    let who = authenticate(&svc, &headers)?;
    let status = match params.get("status").map(String::as_str) {
        None | Some("") | Some("pending") => QueueStatus::Pending,
        Some("flagged") => QueueStatus::Flagged,
        Some(other) => return Err(ApiError::invalid(format!("unknown status `{other}`"))),
    };
    let filter = QueueFilter {
        kind: parse_param::<NodeKind>(&params, "kind")?,
        topic: parse_param::<Topic>(&params, "topic")?,
        polarity: parse_param::<Polarity>(&params, "polarity")?,
        status,
    };
    let size = parse_param::<usize>(&params, "size")?.unwrap_or(DEFAULT_BATCH).min(MAX_BATCH);
    let items = svc.claim_batch(&who.id, &filter, size)?;
    Ok(Json(json!({ "items": items })).into_response())
}

#[derive(Deserialize)]
struct DecisionBody {
    item: NodeId,
    #[serde(flatten)]
    verdict: Verdict,
}

async fn decisions(State(svc): State<Shared>, headers: HeaderMap, body: Bytes) -> Result<Response, ApiError> {
    let who = authenticate(&svc, &headers)?;
    let body: DecisionBody = parse_body(&body)?;
    let status = svc.submit_decision(&who.id, &body.item, body.verdict)?;
    Ok(Json(json!({ "item": body.item, "status": status })).into_response())
}

#[derive(Deserialize)]
struct ResolveBody {
    item: NodeId,
    #[serde(flatten)]
    verdict: Verdict,
    #[serde(default)]
    relabel: Option<String>,
}

async fn resolve(State(svc): State<Shared>, headers: HeaderMap, body: Bytes) -> Result<Response, ApiError> {
    let who = authenticate(&svc, &headers)?;
    let body: ResolveBody = parse_body(&body)?;
    let relabel = body
        .relabel
        .as_deref()
        .map(|l| normalize_emotion(l).map_err(|e| ApiError::invalid(e.to_string())))
        .transpose()?;
    let status = svc.expert_resolve(&who.id, &body.item, body.verdict, relabel)?;
    Ok(Json(json!({ "item": body.item, "status": status })).into_response())
}

async fn stats(State(svc): State<Shared>, headers: HeaderMap) -> Result<Response, ApiError> {
    authenticate(&svc, &headers)?;
    Ok(Json(svc.stats()).into_response())
}

#[derive(Deserialize, Default)]
struct FinalizeBody {
    #[serde(default)]
    force: bool,
}

async fn finalize(State(svc): State<Shared>, headers: HeaderMap, body: Bytes) -> Result<Response, ApiError> {
    let who = authenticate(&svc, &headers)?;
    if !who.expert {
        return Err(CurationError::RoleDenied(who.id.clone()).into());
    }
    let body: FinalizeBody = if body.is_empty() { FinalizeBody::default() } else { parse_body(&body)? };
    let svc = svc.clone();
    let graph = tokio::task::spawn_blocking(move || svc.finalize(body.force))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))??;
    Ok(Json(graph.stats()).into_response())
}

pub fn router(service: Arc<CurationService>) -> Router {
    Router::new()
        .route("/queue", get(queue))
        .route("/decisions", post(decisions))
        .route("/expert/resolve", post(resolve))
        .route("/stats", get(stats))
        .route("/finalize", post(finalize))
        .with_state(service)
}

/// Serves the API on `listener` until the task is dropped.
pub async fn serve(listener: tokio::net::TcpListener, service: Arc<CurationService>) -> std::io::Result<()> {
    axum::serve(listener, router(service)).await
}
