use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use dragrank_core::constraints::ConstraintScheme;
use dragrank_core::{ingest_str, DataError, DragRequest, ErrorKind, Session, SessionConfig, SessionError};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::store::{Store, StoreError};

pub type SharedSession = Arc<RwLock<Session>>;

pub struct AppState {
    config: SessionConfig,
    store: Option<Store>,
    sessions: RwLock<HashMap<String, SharedSession>>,
}

impl AppState {
    pub fn new(config: SessionConfig, store: Option<Store>) -> Self {
        AppState {
            config,
            store,
            sessions: RwLock::new(HashMap::new()),
        }
    }

    /// Restores every session persisted in the store, logging the ones that fail.
    pub fn restore(&self) -> Result<usize, StoreError> {
        let Some(store) = &self.store else { return Ok(0) };
        let mut restored = 0;
        for loaded in store.load_all()? {
            match loaded {
                Ok(session) => {
                    self.insert(session);
                    restored += 1;
                }
                Err(e) => tracing::warn!("skipping stored session: {e}"),
            }
        }
        Ok(restored)
    }

    pub fn insert(&self, session: Session) -> SharedSession {
        let id = session.id().to_string();
        let shared = Arc::new(RwLock::new(session));
        self.sessions.write().unwrap().insert(id, shared.clone());
        shared
    }

    pub fn session(&self, id: &str) -> Result<SharedSession, ApiError> {
        self.sessions
            .read()
            .unwrap()
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "unknown_session", format!("unknown session `{id}`")))
    }
}

#[derive(Debug)]
pub struct ApiError {
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
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({ "error": { "code": self.code, "message": self.message } });
        (self.status, Json(body)).into_response()
    }
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        let (status, code) = match e.kind() {
            ErrorKind::BadRequest => (StatusCode::BAD_REQUEST, "invalid_request"),
            ErrorKind::NotFound => (StatusCode::NOT_FOUND, "not_found"),
            ErrorKind::Conflict => (StatusCode::CONFLICT, "conflict"),
            ErrorKind::Internal => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
        };
        ApiError::new(status, code, e.to_string())
    }
}

impl From<DataError> for ApiError {
    fn from(e: DataError) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, "invalid_dataset", e.to_string())
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "storage", e.to_string())
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/rankings", get(get_rankings))
        .route("/sessions/{id}/drags", post(submit_drag))
        .route("/sessions/{id}/schemes", get(list_schemes).post(save_scheme))
        .route("/sessions/{id}/comparison", get(get_comparison))
        .route("/sessions/{id}/projection", get(get_projection))
        .with_state(state)
}

#[derive(Debug, Deserialize)]
pub struct SchemeQuery {
    scheme: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SaveRequest {
    pub which: ConstraintScheme,
    #[serde(default)]
    pub label: String,
}

fn summary(s: &Session) -> serde_json::Value {
    json!({
        "sessionId": s.id(),
        "indicators": s.dataset().schema().indicators(),
        "schemes": s.schemes(),
        "ranking": s.ranking(None).ok(),
        "pending": s.pending(),
    })
}

async fn create_session(State(state): State<Arc<AppState>>, body: String) -> Result<Response, ApiError> {
    let dataset = ingest_str(&body)?;
    let id = uuid::Uuid::new_v4().to_string();
    let session = Session::new(id, dataset, state.config)?;
    if let Some(store) = &state.store {
        store.create(&session, &body)?;
    }
    let body = summary(&session);
    state.insert(session);
    Ok((StatusCode::CREATED, Json(body)).into_response())
}

async fn get_session(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let shared = state.session(&id)?;
    let s = shared.read().unwrap();
    Ok(Json(summary(&s)).into_response())
}

async fn get_rankings(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(q): Query<SchemeQuery>,
) -> Result<Response, ApiError> {
    let shared = state.session(&id)?;
    let s = shared.read().unwrap();
    Ok(Json(s.ranking(q.scheme.as_deref())?).into_response())
}

async fn submit_drag(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Json(req): Json<DragRequest>,
) -> Result<Response, ApiError> {
    let shared = state.session(&id)?;
    let mut s = shared.write().unwrap();
    let preview = s.submit_drag(&req)?.clone();
    if let Some(store) = &state.store {
        store.append(&id, s.audit_log().last().expect("drag was logged"))?;
    }
    Ok(Json(preview).into_response())
}

async fn list_schemes(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let shared = state.session(&id)?;
    let s = shared.read().unwrap();
    Ok(Json(s.schemes()).into_response())
}

async fn save_scheme(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Json(req): Json<SaveRequest>,
) -> Result<Response, ApiError> {
    let shared = state.session(&id)?;
    let mut s = shared.write().unwrap();
    let scheme = s.save_scheme(req.which, &req.label)?;
    if let Some(store) = &state.store {
        store.append(&id, s.audit_log().last().expect("save was logged"))?;
    }
    let ranking = s.ranking(Some(&scheme.id))?.clone();
    let body = json!({ "scheme": scheme, "ranking": ranking });
    Ok((StatusCode::CREATED, Json(body)).into_response())
}

async fn get_comparison(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let shared = state.session(&id)?;
    let s = shared.read().unwrap();
    Ok(Json(s.comparison()?).into_response())
}

async fn get_projection(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(q): Query<SchemeQuery>,
) -> Result<Response, ApiError> {
    let shared = state.session(&id)?;
    {
        let s = shared.read().unwrap();
        let scheme = q.scheme.clone().unwrap_or_else(|| s.latest_scheme().id.clone());
        if let Some(p) = s.cached_projection(&scheme) {
            return Ok(Json(p).into_response());
        }
    }
    let mut s = shared.write().unwrap();
    let scheme = q.scheme.unwrap_or_else(|| s.latest_scheme().id.clone());
    Ok(Json(s.projection(&scheme)?).into_response())
}
