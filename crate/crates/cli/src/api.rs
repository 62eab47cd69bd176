//! HTTP+JSON session API. Every body carries `schema_version`; errors are
//! `{code, message}` objects.

use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use skillscout_core::service::{PolicyKind, SessionManager};
use skillscout_core::usersim::UserProfile;
use skillscout_core::Error;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateSessionRequest {
    pub policy: PolicyKind,
    pub profile: UserProfile,
    /// Optional opening utterance, recorded in the log.
    #[serde(default)]
    pub utterance: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UtteranceRequest {
    pub text: String,
}

#[derive(Serialize)]
struct Versioned<T> {
    schema_version: u32,
    #[serde(flatten)]
    body: T,
}

fn ok<T: Serialize>(status: StatusCode, body: T) -> Response {
    (
        status,
        Json(Versioned {
            schema_version: SCHEMA_VERSION,
            body,
        }),
    )
        .into_response()
}

#[derive(Debug, Serialize)]
pub struct ApiError {
    #[serde(skip)]
    status: StatusCode,
    code: &'static str,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
        }
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let (status, code) = match &e {
            Error::UnknownSession(_) => (StatusCode::NOT_FOUND, "unknown_session"),
            Error::SessionTerminal(_) => (StatusCode::CONFLICT, "session_terminal"),
            Error::PolicyUnavailable(_) => (StatusCode::CONFLICT, "policy_unavailable"),
            Error::Config(_) => (StatusCode::BAD_REQUEST, "invalid_request"),
            _ => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
        };
        Self::new(status, code, e.to_string())
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "invalid_request", r.body_text())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = self.status;
        let mut res = ok(status, self);
        *res.status_mut() = status;
        res
    }
}

type ApiResult = Result<Response, ApiError>;

pub fn router(manager: Arc<SessionManager>) -> Router {
    Router::new()
        .route("/v1/sessions", post(create_session))
        .route("/v1/sessions/{id}", get(get_session))
        .route("/v1/sessions/{id}/utterances", post(post_utterance))
        .route("/v1/metrics", get(metrics))
        .fallback(|| async { ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such route") })
        .with_state(manager)
}

async fn create_session(
    State(m): State<Arc<SessionManager>>,
    body: Result<Json<CreateSessionRequest>, JsonRejection>,
) -> ApiResult {
    let Json(req) = body?;
    let opened = m.create_session(req.policy, req.profile, req.utterance.as_deref())?;
    Ok(ok(StatusCode::CREATED, opened))
}

async fn post_utterance(
    State(m): State<Arc<SessionManager>>,
    Path(id): Path<String>,
    body: Result<Json<UtteranceRequest>, JsonRejection>,
) -> ApiResult {
    let Json(req) = body?;
    Ok(ok(StatusCode::OK, m.post_utterance(&id, &req.text)?))
}

async fn get_session(State(m): State<Arc<SessionManager>>, Path(id): Path<String>) -> ApiResult {
    Ok(ok(StatusCode::OK, m.session(&id)?))
}

async fn metrics(State(m): State<Arc<SessionManager>>) -> ApiResult {
    Ok(ok(StatusCode::OK, m.metrics()))
}
