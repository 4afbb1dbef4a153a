use std::net::SocketAddr;
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, Request, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde_json::json;
use tower_http::cors::{Any, CorsLayer};

use crate::store::{FeedbackRequest, StoreConfig, TriageStore};
use crate::{TriageError, TriageResult};

impl IntoResponse for TriageError {
    fn into_response(self) -> Response {
        let status = match &self {
            TriageError::UnknownPatient(_) | TriageError::UnknownTrial(_) | TriageError::NotStructured(_) => {
                StatusCode::NOT_FOUND
            }
            TriageError::BadRequest(_) => StatusCode::BAD_REQUEST,
            TriageError::Unauthorized => StatusCode::UNAUTHORIZED,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        if status.is_server_error() {
            log::error!("{self}");
        }
        (status, Json(json!({ "error": self.to_string() }))).into_response()
    }
}

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub store: StoreConfig,
    /// When set, every request must carry `Authorization: Bearer <token>`.
    pub bearer_token: Option<String>,
    /// Allowed browser origin; any origin when unset.
    pub cors_origin: Option<String>,
}

#[derive(Clone)]
struct AppState {
    store: Arc<TriageStore>,
    token: Option<Arc<str>>,
}

/// Runs store work off the async executor.
async fn blocking<T, F>(store: Arc<TriageStore>, f: F) -> TriageResult<T>
where
    F: FnOnce(&TriageStore) -> TriageResult<T> + Send + 'static,
    T: Send + 'static,
{
    tokio::task::spawn_blocking(move || f(&store))
        .await
        .map_err(|e| TriageError::Task(e.to_string()))?
}

async fn list_patients(State(s): State<AppState>) -> TriageResult<impl IntoResponse> {
    Ok(Json(blocking(s.store, |st| st.patients()).await?))
}

async fn candidates(State(s): State<AppState>, Path(id): Path<String>) -> TriageResult<impl IntoResponse> {
    Ok(Json(blocking(s.store, move |st| st.candidates(&id)).await?))
}

async fn structured(State(s): State<AppState>, Path(nct): Path<String>) -> TriageResult<impl IntoResponse> {
    Ok(Json(blocking(s.store, move |st| st.structured(&nct)).await?))
}

async fn feedback_metrics(State(s): State<AppState>) -> TriageResult<impl IntoResponse> {
    Ok(Json(blocking(s.store, |st| st.feedback_metrics()).await?))
}

async fn post_feedback(
    State(s): State<AppState>,
    body: Result<Json<FeedbackRequest>, JsonRejection>,
) -> TriageResult<impl IntoResponse> {
    let Json(req) = body.map_err(|e| TriageError::BadRequest(e.body_text()))?;
    let event = blocking(s.store, move |st| st.record_feedback(req)).await?;
    Ok((StatusCode::CREATED, Json(event)))
}

async fn require_token(State(s): State<AppState>, req: Request, next: Next) -> Response {
    if let Some(token) = &s.token {
        let presented = req
            .headers()
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "));
        if presented != Some(token.as_ref()) {
            return TriageError::Unauthorized.into_response();
        }
    }
    next.run(req).await
}

fn cors(origin: Option<&str>) -> TriageResult<CorsLayer> {
    let layer = CorsLayer::new()
        .allow_methods(Any)
        .allow_headers([header::CONTENT_TYPE, header::AUTHORIZATION]);
    Ok(match origin {
        Some(o) => layer.allow_origin(
            HeaderValue::from_str(o).map_err(|e| TriageError::BadRequest(format!("CORS origin {o:?}: {e}")))?,
        ),
        None => layer.allow_origin(Any),
    })
}

/// Builds the HTTP routes over an opened store.
pub fn router(store: Arc<TriageStore>, bearer_token: Option<String>, cors_origin: Option<&str>) -> TriageResult<Router> {
    let state = AppState {
        store,
        token: bearer_token.map(Into::into),
    };
    Ok(Router::new()
        .route("/patients", get(list_patients))
        .route("/patients/{id}/candidates", get(candidates))
        .route("/trials/{nct_id}/structured", get(structured))
        .route("/feedback", post(post_feedback))
        .route("/metrics/feedback", get(feedback_metrics))
        .route_layer(middleware::from_fn_with_state(state.clone(), require_token))
        .layer(cors(cors_origin)?)
        .with_state(state))
}

/// Opens the data directory and serves until the process is stopped.
pub async fn serve(config: ServerConfig, addr: SocketAddr) -> TriageResult<()> {
    let store_config = config.store.clone();
    let store = tokio::task::spawn_blocking(move || TriageStore::open(store_config))
        .await
        .map_err(|e| TriageError::Task(e.to_string()))??;
    let app = router(Arc::new(store), config.bearer_token, config.cors_origin.as_deref())?;
    let io = |source| TriageError::Serve { addr, source };
    let listener = tokio::net::TcpListener::bind(addr).await.map_err(io)?;
    log::info!("triage service listening on {addr}");
    axum::serve(listener, app).await.map_err(io)
}
