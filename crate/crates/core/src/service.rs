//! HTTP front end of the session store.
//!
//! | method | path | |
//! |---|---|---|
//! | POST | `/sessions` | create from a [`SessionSpec`] |
//! | GET | `/sessions` | list |
//! | GET | `/sessions/{id}` | snapshot |
//! | POST | `/sessions/{id}/outcomes` | record an [`OutcomeRequest`] |
//! | POST | `/sessions/{id}/abandon` | close without a result |
//! | GET | `/sessions/{id}/export?format=csv\|json` | trials as a dataset |

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use crate::error::{Error, FieldError, Result};
use crate::session::{OutcomeRequest, SessionSpec, SessionStore, SessionView};
use crate::sim::ExportFormat;

pub const ENV_DATA_DIR: &str = "SENSITEST_DATA_DIR";
pub const ENV_BIND: &str = "SENSITEST_BIND";
pub const ENV_SEED: &str = "SENSITEST_SEED";

#[derive(Debug, Clone, PartialEq)]
pub struct ServiceConfig {
    pub data_dir: PathBuf,
    pub bind: SocketAddr,
    pub seed: u64,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            data_dir: PathBuf::from("sessions"),
            bind: SocketAddr::from(([127, 0, 0, 1], 8080)),
            seed: 0,
        }
    }
}

impl ServiceConfig {
    /// Defaults overridden by the `SENSITEST_*` environment variables.
    pub fn from_env() -> Result<Self> {
        Self::from_lookup(|k| std::env::var(k).ok())
    }

    pub fn from_lookup(get: impl Fn(&str) -> Option<String>) -> Result<Self> {
        let mut c = Self::default();
        if let Some(d) = get(ENV_DATA_DIR) {
            c.data_dir = d.into();
        }
        if let Some(b) = get(ENV_BIND) {
            c.bind = b
                .parse()
                .map_err(|e| Error::config(ENV_BIND, format!("`{b}` is not a socket address: {e}")))?;
        }
        if let Some(s) = get(ENV_SEED) {
            c.seed = s
                .parse()
                .map_err(|e| Error::config(ENV_SEED, format!("`{s}` is not an unsigned integer: {e}")))?;
        }
        Ok(c)
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub fields: Vec<FieldError>,
    /// Current state, sent with conflicts so the client can resynchronise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub current: Option<Box<SessionView>>,
}

struct ApiError {
    status: StatusCode,
    body: ErrorBody,
}

impl ApiError {
    fn new(status: StatusCode, kind: &str, message: impl Into<String>) -> Self {
        Self {
            status,
            body: ErrorBody {
                error: kind.into(),
                message: message.into(),
                fields: Vec::new(),
                current: None,
            },
        }
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match e {
            Error::UnknownSession(_) => ApiError::new(StatusCode::NOT_FOUND, "unknown-session", msg),
            Error::SessionClosed(_) => ApiError::new(StatusCode::CONFLICT, "session-closed", msg),
            Error::StaleEcho { .. } => ApiError::new(StatusCode::CONFLICT, "stale-echo", msg),
            Error::Config(fields) => {
                let mut a = ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid-config", msg);
                a.body.fields = fields;
                a
            }
            Error::Io { .. } => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "io", msg),
            _ => ApiError::new(StatusCode::BAD_REQUEST, "rejected", msg),
        }
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, "bad-request", r.body_text())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

type Shared = Arc<SessionStore>;

async fn create(State(store): State<Shared>, body: std::result::Result<Json<SessionSpec>, JsonRejection>) -> std::result::Result<(StatusCode, Json<SessionView>), ApiError> {
    let Json(spec) = body?;
    let view = tokio::task::spawn_blocking(move || store.create(spec))
        .await
        .expect("store task")?;
    Ok((StatusCode::CREATED, Json(view)))
}

async fn list(State(store): State<Shared>) -> impl IntoResponse {
    Json(store.list())
}

async fn snapshot(State(store): State<Shared>, Path(id): Path<String>) -> std::result::Result<Json<SessionView>, ApiError> {
    Ok(Json(store.get(&id)?))
}

async fn outcome(
    State(store): State<Shared>,
    Path(id): Path<String>,
    body: std::result::Result<Json<OutcomeRequest>, JsonRejection>,
) -> std::result::Result<Json<SessionView>, ApiError> {
    let Json(req) = body?;
    let s = store.clone();
    let i = id.clone();
    match tokio::task::spawn_blocking(move || s.record(&i, &req)).await.expect("store task") {
        Ok(v) => Ok(Json(v)),
        Err(e) => {
            let conflict = matches!(e, Error::StaleEcho { .. } | Error::SessionClosed(_));
            let mut a = ApiError::from(e);
            if conflict {
                a.body.current = store.get(&id).ok().map(Box::new);
            }
            Err(a)
        }
    }
}

#[derive(Debug, Default, Deserialize)]
struct AbandonBody {
    #[serde(default)]
    reason: Option<String>,
}

async fn abandon(
    State(store): State<Shared>,
    Path(id): Path<String>,
    body: Option<Json<AbandonBody>>,
) -> std::result::Result<Json<SessionView>, ApiError> {
    let reason = body.and_then(|Json(b)| b.reason);
    let view = tokio::task::spawn_blocking(move || store.abandon(&id, reason))
        .await
        .expect("store task")?;
    Ok(Json(view))
}

#[derive(Debug, Deserialize)]
struct ExportQuery {
    #[serde(default)]
    format: Option<String>,
}

async fn export(
    State(store): State<Shared>,
    Path(id): Path<String>,
    Query(q): Query<ExportQuery>,
) -> std::result::Result<Response, ApiError> {
    let format: ExportFormat = q.format.as_deref().unwrap_or("csv").parse()?;
    let body = store.export(&id, format)?;
    let (mime, ext) = match format {
        ExportFormat::Csv => ("text/csv; charset=utf-8", "csv"),
        ExportFormat::Json => ("application/json", "json"),
    };
    Ok((
        [
            (header::CONTENT_TYPE, mime.to_string()),
            (header::CONTENT_DISPOSITION, format!("attachment; filename=\"{id}.{ext}\"")),
        ],
        body,
    )
        .into_response())
}

pub fn router(store: Arc<SessionStore>) -> Router {
    Router::new()
        .route("/sessions", post(create).get(list))
        .route("/sessions/{id}", get(snapshot))
        .route("/sessions/{id}/outcomes", post(outcome))
        .route("/sessions/{id}/abandon", post(abandon))
        .route("/sessions/{id}/export", get(export))
        .with_state(store)
}

/// Serve until Ctrl-C.
pub async fn serve(cfg: ServiceConfig) -> Result<()> {
    let store = Arc::new(SessionStore::open(&cfg.data_dir, cfg.seed)?);
    let listener = tokio::net::TcpListener::bind(cfg.bind)
        .await
        .map_err(|e| Error::io(cfg.bind.to_string(), e))?;
    let addr = listener.local_addr().map_err(|e| Error::io(cfg.bind.to_string(), e))?;
    eprintln!("listening on http://{addr} (data in {})", cfg.data_dir.display());
    axum::serve(listener, router(store))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| Error::io(addr.to_string(), e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn env_overrides() {
        let env = |k: &str| match k {
            ENV_DATA_DIR => Some("/tmp/s".to_string()),
            ENV_BIND => Some("0.0.0.0:9000".to_string()),
            ENV_SEED => Some("17".to_string()),
            _ => None,
        };
        let c = ServiceConfig::from_lookup(env).unwrap();
        assert_eq!(c.data_dir, PathBuf::from("/tmp/s"));
        assert_eq!(c.bind.port(), 9000);
        assert_eq!(c.seed, 17);
        assert_eq!(ServiceConfig::from_lookup(|_| None).unwrap(), ServiceConfig::default());
        assert!(ServiceConfig::from_lookup(|k| (k == ENV_SEED).then(|| "x".into())).is_err());
    }
}
