//! HTTP review service.
//!
//! | method | path                      | body                          |
//! |--------|---------------------------|-------------------------------|
//! | GET    | `/health`                 |                               |
//! | POST   | `/predict?theta=&min_area=` | raw PNG bytes               |
//! | GET    | `/studies`                |                               |
//! | GET    | `/studies/{id}`           |                               |
//! | POST   | `/studies/{id}/decision`  | `{verdict, theta_used, note}` |
//!
//! Images travel as base64-encoded PNG. Errors are JSON objects with an
//! `error` kind and a `message`; internal failures only expose an opaque id.

pub mod store;

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::rejection::QueryRejection;
use axum::extract::{DefaultBodyLimit, Path as UrlPath, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine as _;
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::net::TcpListener;
use tokio::sync::oneshot;

use crate::error::{Error, ImagingError};
use crate::imaging;
use crate::infer::{self, DEFAULT_MIN_AREA, DEFAULT_THETA};
use crate::model::UNet;
use store::{Artefact, Store, StoreError, Study, Verdict};

/// Largest accepted request body.
pub const MAX_BODY_BYTES: usize = 32 * 1024 * 1024;

#[derive(Clone)]
pub struct AppState {
    model: Arc<UNet>,
    store: Arc<Mutex<Store>>,
}

impl AppState {
    pub fn open(model: UNet, data_dir: &Path) -> Result<Self, StoreError> {
        let (store, report) = Store::open(data_dir)?;
        for file in report.torn_lines {
            tracing::warn!(file, "recovered from a torn log line");
        }
        Ok(Self {
            model: Arc::new(model),
            store: Arc::new(Mutex::new(store)),
        })
    }
}

#[derive(Debug)]
pub enum ApiError {
    BadRequest(String),
    NotFound(String),
    Conflict(String),
    Internal(String),
}

impl ApiError {
    fn internal(err: impl std::fmt::Display) -> Self {
        ApiError::Internal(err.to_string())
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::UnknownStudy(_) => ApiError::NotFound(e.to_string()),
            StoreError::AlreadyReviewed(_) => ApiError::Conflict(e.to_string()),
            other => ApiError::internal(other),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, body) = match self {
            ApiError::BadRequest(m) => (StatusCode::BAD_REQUEST, json!({"error": "bad_request", "message": m})),
            ApiError::NotFound(m) => (StatusCode::NOT_FOUND, json!({"error": "not_found", "message": m})),
            ApiError::Conflict(m) => (StatusCode::CONFLICT, json!({"error": "conflict", "message": m})),
            ApiError::Internal(detail) => {
                let id = format!("{:016x}", rand::random::<u64>());
                tracing::error!(error_id = %id, %detail, "internal error");
                (
                    StatusCode::INTERNAL_SERVER_ERROR,
                    json!({"error": "internal", "message": "internal error", "error_id": id}),
                )
            }
        };
        (status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

#[derive(Debug, Deserialize)]
pub struct PredictQuery {
    theta: Option<f32>,
    min_area: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PredictResponse {
    pub study_id: String,
    pub rle: String,
    pub positive: bool,
    pub width: usize,
    pub height: usize,
    pub theta: f32,
    pub min_area: usize,
    /// 8-bit grayscale PNG, `round(p * 255)`.
    pub prob_map: String,
    pub overlay: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StudyDetail {
    #[serde(flatten)]
    pub study: Study,
    pub image: String,
    pub prob_map: String,
    pub overlay: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecisionRequest {
    pub verdict: Verdict,
    pub theta_used: f32,
    #[serde(default)]
    pub note: String,
}

async fn health() -> Json<serde_json::Value> {
    Json(json!({"status": "ok", "version": env!("CARGO_PKG_VERSION")}))
}

async fn predict(
    State(state): State<AppState>,
    query: Result<Query<PredictQuery>, QueryRejection>,
    body: Bytes,
) -> ApiResult<Json<PredictResponse>> {
    let Query(q) = query.map_err(|e| ApiError::BadRequest(e.body_text()))?;
    let theta = q.theta.unwrap_or(DEFAULT_THETA);
    let min_area = q.min_area.unwrap_or(DEFAULT_MIN_AREA);
    infer::check_theta(theta).map_err(|e| ApiError::BadRequest(e.to_string()))?;
    if body.is_empty() {
        return Err(ApiError::BadRequest("request body must be a PNG image".into()));
    }

    let model = state.model.clone();
    let input = body.clone();
    let pred = tokio::task::spawn_blocking(move || infer::predict(&model, &input, theta, min_area))
        .await
        .map_err(ApiError::internal)?
        .map_err(|e| match e {
            Error::Imaging(ImagingError::Corrupt(_) | ImagingError::InvalidArgument(_)) | Error::Config(_) => {
                ApiError::BadRequest(e.to_string())
            }
            other => ApiError::internal(other),
        })?;

    let prob_png = imaging::encode_gray_png(pred.prob.width, pred.prob.height, &pred.prob.quantized())
        .map_err(ApiError::internal)?;
    let overlay_png = imaging::encode_rgb_png(&pred.overlay).map_err(ApiError::internal)?;
    let store = state.store.clone();
    let (rle, prob, over) = (pred.rle.clone(), prob_png.clone(), overlay_png.clone());
    let study = tokio::task::spawn_blocking(move || {
        store.lock().expect("store lock poisoned").add_study(
            &rle,
            theta,
            min_area,
            [
                (Artefact::Input, &body[..]),
                (Artefact::Probability, &prob[..]),
                (Artefact::Overlay, &over[..]),
            ],
        )
    })
    .await
    .map_err(ApiError::internal)??;

    Ok(Json(PredictResponse {
        study_id: study.study_id,
        positive: !pred.mask.is_empty(),
        rle: pred.rle,
        width: pred.prob.width,
        height: pred.prob.height,
        theta,
        min_area,
        prob_map: B64.encode(prob_png),
        overlay: B64.encode(overlay_png),
    }))
}

async fn list_studies(State(state): State<AppState>) -> Json<Vec<Study>> {
    let store = state.store.lock().expect("store lock poisoned");
    Json(store.list().into_iter().cloned().collect())
}

async fn get_study(State(state): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<StudyDetail>> {
    let store = state.store.lock().expect("store lock poisoned");
    let study = store.get(&id).ok_or_else(|| ApiError::NotFound(format!("unknown study {id}")))?;
    let read = |kind| store.read_artefact(&id, kind).map(|b| B64.encode(b));
    Ok(Json(StudyDetail {
        image: read(Artefact::Input)?,
        prob_map: read(Artefact::Probability)?,
        overlay: read(Artefact::Overlay)?,
        study: study.clone(),
    }))
}

async fn post_decision(
    State(state): State<AppState>,
    UrlPath(id): UrlPath<String>,
    body: Bytes,
) -> ApiResult<Json<Study>> {
    let req: DecisionRequest =
        serde_json::from_slice(&body).map_err(|e| ApiError::BadRequest(format!("invalid decision: {e}")))?;
    infer::check_theta(req.theta_used).map_err(|e| ApiError::BadRequest(e.to_string()))?;
    let store = state.store.clone();
    let study = tokio::task::spawn_blocking(move || {
        store
            .lock()
            .expect("store lock poisoned")
            .decide(&id, req.verdict, req.theta_used, &req.note)
    })
    .await
    .map_err(ApiError::internal)??;
    Ok(Json(study))
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/predict", post(predict))
        .route("/studies", get(list_studies))
        .route("/studies/{id}", get(get_study))
        .route("/studies/{id}/decision", post(post_decision))
        .layer(DefaultBodyLimit::max(MAX_BODY_BYTES))
        .with_state(state)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ServiceConfig {
    pub host: String,
    pub port: u16,
    pub data_dir: PathBuf,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            host: "127.0.0.1".into(),
            port: 8080,
            data_dir: PathBuf::from("pneumoseg-data"),
        }
    }
}

/// Serves until `shutdown` resolves. `on_bound` receives the bound address,
/// which differs from the configured one when port 0 is used.
pub async fn serve(
    model: UNet,
    cfg: &ServiceConfig,
    on_bound: impl FnOnce(SocketAddr),
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> crate::Result<()> {
    let state = AppState::open(model, &cfg.data_dir)?;
    let addr = format!("{}:{}", cfg.host, cfg.port);
    let io = |source| Error::Io {
        path: PathBuf::from(&addr),
        source,
    };
    let listener = TcpListener::bind(&addr).await.map_err(io)?;
    on_bound(listener.local_addr().map_err(io)?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(shutdown)
        .await
        .map_err(io)
}

/// A server running on its own thread and runtime.
pub struct BackgroundServer {
    pub addr: SocketAddr,
    stop: Option<oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<crate::Result<()>>>,
}

impl BackgroundServer {
    pub fn url(&self, path: &str) -> String {
        format!("http://{}{path}", self.addr)
    }

    /// Stops accepting connections and waits for the server thread.
    pub fn shutdown(mut self) -> crate::Result<()> {
        self.stop_and_join()
    }

    fn stop_and_join(&mut self) -> crate::Result<()> {
        if let Some(tx) = self.stop.take() {
            let _ = tx.send(());
        }
        match self.thread.take() {
            Some(t) => t.join().unwrap_or_else(|_| Err(Error::Config("server thread panicked".into()))),
            None => Ok(()),
        }
    }
}

impl Drop for BackgroundServer {
    fn drop(&mut self) {
        let _ = self.stop_and_join();
    }
}

pub fn spawn_background(model: UNet, cfg: ServiceConfig) -> crate::Result<BackgroundServer> {
    let (addr_tx, addr_rx) = std::sync::mpsc::channel();
    let (stop_tx, stop_rx) = oneshot::channel::<()>();
    let failed = addr_tx.clone();
    let thread = std::thread::spawn(move || {
        let rt = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(2)
            .enable_all()
            .build()
            .map_err(|source| Error::Io {
                path: PathBuf::from("tokio runtime"),
                source,
            })?;
        let result = rt.block_on(serve(
            model,
            &cfg,
            move |a| {
                let _ = addr_tx.send(Some(a));
            },
            async move {
                let _ = stop_rx.await;
            },
        ));
        let _ = failed.send(None);
        result
    });
    match addr_rx.recv() {
        Ok(Some(addr)) => Ok(BackgroundServer {
            addr,
            stop: Some(stop_tx),
            thread: Some(thread),
        }),
        _ => Err(thread
            .join()
            .unwrap_or_else(|_| Err(Error::Config("server thread panicked".into())))
            .err()
            .unwrap_or_else(|| Error::Config("server exited before binding".into()))),
    }
}
