//! HTTP API.
//!
//! | method | path                     | body                | answer |
//! |--------|--------------------------|---------------------|--------|
//! | GET    | /health                  |                     | status, session count (no token needed) |
//! | POST   | /sessions                |                     | 201, session view |
//! | GET    | /sessions/{id}           |                     | session view |
//! | POST   | /sessions/{id}/messages  | `{"text": ...}`     | system act of the turn |
//! | GET    | /sessions/{id}/events    |                     | server-sent `act` events |
//! | POST   | /export                  | filter and formats  | file contents by name |
//!
//! Unknown sessions answer 404, messages after hand-over 409, a missing or wrong
//! bearer token 401.

use std::collections::BTreeMap;
use std::convert::Infallible;
use std::sync::Arc;

use axum::extract::{Path, Request, State};
use axum::http::{header, StatusCode};
use axum::middleware::{self, Next};
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::Stream;
use serde::Deserialize;
use serde_json::json;
use tokio::sync::broadcast;
use tutorbot_core::record::{Artifact, ExportFilter};
use tutorbot_core::Outcome;

use crate::service::{MessageReply, Service, ServiceError};

#[derive(Clone)]
pub struct AppState {
    pub service: Arc<Service>,
    pub token: Option<String>,
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let status = match &self {
            ServiceError::NotFound(_) => StatusCode::NOT_FOUND,
            ServiceError::Closed(_) => StatusCode::CONFLICT,
            ServiceError::Store(_) | ServiceError::Replay { .. } => StatusCode::INTERNAL_SERVER_ERROR,
        };
        (status, Json(json!({"error": self.to_string()}))).into_response()
    }
}

fn bad_request(message: String) -> Response {
    (StatusCode::BAD_REQUEST, Json(json!({"error": message}))).into_response()
}

pub fn router(state: AppState) -> Router {
    let api = Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/messages", post(post_message))
        .route("/sessions/{id}/events", get(events))
        .route("/export", post(export))
        .route_layer(middleware::from_fn_with_state(state.clone(), require_token));
    Router::new().route("/health", get(health)).merge(api).with_state(state)
}

async fn require_token(State(st): State<AppState>, req: Request, next: Next) -> Response {
    if let Some(token) = &st.token {
        let given = req.headers().get(header::AUTHORIZATION).and_then(|v| v.to_str().ok());
        if given != Some(format!("Bearer {token}").as_str()) {
            return (StatusCode::UNAUTHORIZED, Json(json!({"error": "missing or wrong bearer token"}))).into_response();
        }
    }
    next.run(req).await
}

async fn health(State(st): State<AppState>) -> Json<serde_json::Value> {
    Json(json!({"status": "ok", "sessions": st.service.session_count().await}))
}

async fn create_session(State(st): State<AppState>) -> Result<Response, ServiceError> {
    let view = st.service.create_session().await?;
    Ok((StatusCode::CREATED, Json(view)).into_response())
}

async fn get_session(State(st): State<AppState>, Path(id): Path<String>) -> Result<Response, ServiceError> {
    Ok(Json(st.service.get_session(&id).await?).into_response())
}

#[derive(Deserialize)]
struct MessageBody {
    text: String,
}

async fn post_message(
    State(st): State<AppState>,
    Path(id): Path<String>,
    Json(body): Json<MessageBody>,
) -> Result<Json<MessageReply>, ServiceError> {
    Ok(Json(st.service.post_message(&id, &body.text).await?))
}

async fn events(
    State(st): State<AppState>,
    Path(id): Path<String>,
) -> Result<Sse<impl Stream<Item = Result<Event, Infallible>>>, ServiceError> {
    let rx = st.service.subscribe(&id).await?;
    let stream = futures::stream::unfold(rx, |mut rx| async move {
        let event = match rx.recv().await {
            Ok(reply) => Event::default().event("act").json_data(&reply).expect("replies serialize"),
            Err(broadcast::error::RecvError::Lagged(n)) => Event::default().event("lagged").data(n.to_string()),
            Err(broadcast::error::RecvError::Closed) => return None,
        };
        Some((Ok(event), rx))
    });
    Ok(Sse::new(stream).keep_alive(KeepAlive::default()))
}

/// Export request. `outcome` is `handover` (the default), `abandoned` or `all`;
/// `formats` defaults to all five artifacts.
#[derive(Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct ExportRequest {
    pub outcome: Option<String>,
    pub since: Option<String>,
    pub until: Option<String>,
    pub formats: Option<Vec<String>>,
}

impl ExportRequest {
    pub fn parse(&self) -> Result<(ExportFilter, Vec<Artifact>), String> {
        let outcome = match self.outcome.as_deref().unwrap_or("handover") {
            "all" => None,
            o => Some(Outcome::parse(o).ok_or_else(|| format!("unknown outcome {o:?}"))?),
        };
        let kinds = match &self.formats {
            None => Artifact::ALL.to_vec(),
            Some(v) => v
                .iter()
                .map(|f| Artifact::parse(f).ok_or_else(|| format!("unknown format {f:?}")))
                .collect::<Result<_, _>>()?,
        };
        Ok((ExportFilter { outcome, since: self.since.clone(), until: self.until.clone() }, kinds))
    }
}

async fn export(State(st): State<AppState>, body: Option<Json<ExportRequest>>) -> Response {
    let req = body.map(|b| b.0).unwrap_or_default();
    let (filter, kinds) = match req.parse() {
        Ok(x) => x,
        Err(e) => return bad_request(e),
    };
    let files: BTreeMap<String, String> =
        st.service.export(&filter, &kinds).await.into_iter().map(|(k, v)| (k.file_name(), v)).collect();
    Json(json!({ "files": files })).into_response()
}
