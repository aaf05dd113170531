//! HTTP scoring service over a loaded model file.
//!
//! Routes: `POST /v1/score`, `GET /v1/model`, `GET /healthz`. Passwords are
//! never logged; request logs carry only the route and outcome.

use std::future::Future;
use std::io;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, State};
use axum::http::{header, HeaderValue, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use passgauge::scoring::{score, ScoreError};
use passgauge::ModelFile;
use serde::{Deserialize, Serialize};
use tokio::net::TcpListener;
use tower_http::cors::CorsLayer;

/// Request bodies larger than this are refused before parsing.
pub const MAX_BODY_BYTES: usize = 16 * 1024;

#[derive(Debug, Deserialize)]
pub struct ScoreRequest {
    pub password: String,
}

/// Body for requests that are not valid JSON of the expected shape.
#[derive(Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct BadRequest {
    pub error: String,
}

#[derive(Debug)]
pub struct InvalidOrigin(pub String);

impl std::fmt::Display for InvalidOrigin {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "invalid CORS origin {:?}", self.0)
    }
}

impl std::error::Error for InvalidOrigin {}

type Shared = Arc<ModelFile>;

/// Builds the service. With `cors_origin` set, browsers on that origin may
/// call the API; without it no CORS headers are sent.
pub fn router(model: ModelFile, cors_origin: Option<&str>) -> Result<Router, InvalidOrigin> {
    let mut app = Router::new()
        .route("/v1/score", post(score_handler))
        .route("/v1/model", get(model_handler))
        .route("/healthz", get(|| async { "ok" }))
        .layer(DefaultBodyLimit::max(MAX_BODY_BYTES))
        .with_state(Arc::new(model));
    if let Some(origin) = cors_origin {
        let value = HeaderValue::from_str(origin).map_err(|_| InvalidOrigin(origin.to_owned()))?;
        app = app.layer(
            CorsLayer::new()
                .allow_origin(value)
                .allow_methods([Method::GET, Method::POST])
                .allow_headers([header::CONTENT_TYPE]),
        );
    }
    Ok(app)
}

async fn score_handler(State(model): State<Shared>, body: Bytes) -> Response {
    let req: ScoreRequest = match serde_json::from_slice(&body) {
        Ok(r) => r,
        Err(e) => {
            tracing::info!(route = "/v1/score", status = 400, "malformed request");
            let body = BadRequest { error: format!("expected a JSON object with a \"password\" string: {e}") };
            return (StatusCode::BAD_REQUEST, Json(body)).into_response();
        }
    };
    match score(&req.password, &model) {
        Ok(r) => {
            tracing::info!(route = "/v1/score", status = 200, label = ?r.label, "scored");
            Json(r).into_response()
        }
        Err(ScoreError::Invalid(v)) => {
            tracing::info!(route = "/v1/score", status = 422, rule = %v.rule, "rejected");
            (StatusCode::UNPROCESSABLE_ENTITY, Json(v)).into_response()
        }
        Err(ScoreError::Model(e)) => {
            tracing::error!(route = "/v1/score", error = %e, "model failure");
            (StatusCode::INTERNAL_SERVER_ERROR, Json(BadRequest { error: e.to_string() })).into_response()
        }
    }
}

async fn model_handler(State(model): State<Shared>) -> Response {
    Json(model.summary()).into_response()
}

/// Serves until `shutdown` resolves, then drains in-flight requests.
pub async fn serve(
    listener: TcpListener,
    app: Router,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> io::Result<()> {
    axum::serve(listener, app).with_graceful_shutdown(shutdown).await
}

/// Resolves on Ctrl-C or SIGTERM.
pub async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending::<()>().await,
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {},
        _ = term => {},
    }
}
