//! HTTP service: anonymize and classify complaints, persist submissions
//! for operator review, export reviewed labels as a retraining corpus.

pub mod models;
pub mod store;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, RwLock};
use std::time::Instant;

use axum::extract::rejection::JsonRejection;
use axum::extract::{DefaultBodyLimit, Path as UrlPath, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::{DateTime, Duration, Utc};
use crimeclass_core::anonymizer::{default_factory, Anonymizer, AnonymizerConfig, RedactionSpan};
use crimeclass_core::corpus::{write_complaints_to, Complaint};
use crimeclass_core::{CategoryLabel, PredictionResult, TextClassifier};
use rand::Rng;
use serde::{Deserialize, Serialize};
use tokio::sync::Semaphore;

pub use models::{discover, CheckpointInfo, CheckpointKind};
pub use store::{JsonlStore, StoreError, Submission, SubmissionStatus, SubmissionStore};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiToken {
    pub token: String,
    /// Audit scope allows span details in anonymization previews.
    #[serde(default)]
    pub audit: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServiceConfig {
    pub model_dir: Option<PathBuf>,
    /// Directory scanned by `/models`; defaults to the parent of
    /// `model_dir`.
    pub models_root: Option<PathBuf>,
    pub anonymizer: AnonymizerConfig,
    pub bind: SocketAddr,
    pub max_body_bytes: usize,
    pub privacy_mode: bool,
    /// Empty disables authentication.
    pub tokens: Vec<ApiToken>,
    /// `None` disables persistence.
    pub storage_path: Option<PathBuf>,
    pub inference_workers: usize,
    /// Requests allowed to wait for a worker before 503.
    pub queue_capacity: usize,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            model_dir: None,
            models_root: None,
            anonymizer: AnonymizerConfig::default(),
            bind: SocketAddr::from(([127, 0, 0, 1], 8080)),
            max_body_bytes: 64 * 1024,
            privacy_mode: true,
            tokens: Vec::new(),
            storage_path: Some(PathBuf::from("submissions.jsonl")),
            inference_workers: 1,
            queue_capacity: 64,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: ErrorBody,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        Self {
            status,
            body: ErrorBody {
                code: code.into(),
                message: message.into(),
                detail: None,
            },
        }
    }

    fn detail(mut self, detail: impl Into<String>) -> Self {
        self.body.detail = Some(detail.into());
        self
    }

    fn internal(e: impl std::fmt::Display) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", "internal error").detail(e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        if r.status() == StatusCode::PAYLOAD_TOO_LARGE {
            ApiError::new(StatusCode::PAYLOAD_TOO_LARGE, "payload_too_large", "request body too large")
        } else {
            ApiError::new(StatusCode::BAD_REQUEST, "bad_request", "malformed request body").detail(r.body_text())
        }
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::NotFound(id) => ApiError::new(StatusCode::NOT_FOUND, "not_found", format!("no submission {id}")),
            other => ApiError::internal(other),
        }
    }
}

type ApiResult<T> = Result<T, ApiError>;

pub struct LoadedModel {
    pub classifier: Arc<dyn TextClassifier>,
    pub path: PathBuf,
}

pub enum ModelSlot {
    Loading,
    Ready(LoadedModel),
    Unavailable(String),
}

pub struct AppState {
    config: ServiceConfig,
    model: RwLock<ModelSlot>,
    store: Option<Arc<dyn SubmissionStore>>,
    started: Instant,
    workers: Semaphore,
    waiting: AtomicUsize,
}

impl AppState {
    pub fn new(config: ServiceConfig, store: Option<Arc<dyn SubmissionStore>>) -> Arc<Self> {
        let workers = Semaphore::new(config.inference_workers.max(1));
        Arc::new(Self {
            config,
            model: RwLock::new(ModelSlot::Loading),
            store,
            started: Instant::now(),
            workers,
            waiting: AtomicUsize::new(0),
        })
    }

    /// Open the configured store (if any) and build the state.
    pub fn from_config(config: ServiceConfig) -> Result<Arc<Self>, StoreError> {
        let store = match &config.storage_path {
            Some(p) => Some(Arc::new(JsonlStore::open(p)?) as Arc<dyn SubmissionStore>),
            None => None,
        };
        Ok(Self::new(config, store))
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.config
    }

    pub fn set_model(&self, slot: ModelSlot) {
        if let ModelSlot::Ready(m) = &slot {
            log::info!(
                "model loaded from {}: kind {} fingerprint {}",
                m.path.display(),
                m.classifier.kind(),
                m.classifier.fingerprint()
            );
        }
        *self.model.write().expect("model lock") = slot;
    }

    /// Load the configured checkpoint on a blocking thread; the service
    /// answers 503 on model endpoints until it completes.
    pub fn load_model_in_background(self: &Arc<Self>) -> tokio::task::JoinHandle<()> {
        let state = Arc::clone(self);
        tokio::task::spawn_blocking(move || {
            let slot = match &state.config.model_dir {
                None => ModelSlot::Unavailable("no model directory configured".into()),
                Some(dir) => match models::load(dir) {
                    Ok(classifier) => ModelSlot::Ready(LoadedModel {
                        classifier,
                        path: dir.clone(),
                    }),
                    Err(e) => {
                        log::error!("model load failed: {e}");
                        ModelSlot::Unavailable(e)
                    }
                },
            };
            state.set_model(slot);
        })
    }

    fn classifier(&self) -> ApiResult<Arc<dyn TextClassifier>> {
        match &*self.model.read().expect("model lock") {
            ModelSlot::Ready(m) => Ok(Arc::clone(&m.classifier)),
            ModelSlot::Loading => Err(ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "model_loading", "model is loading")),
            ModelSlot::Unavailable(why) => Err(ApiError::new(
                StatusCode::SERVICE_UNAVAILABLE,
                "model_unavailable",
                "no model loaded",
            )
            .detail(why.clone())),
        }
    }

    fn models_root(&self) -> Option<PathBuf> {
        self.config
            .models_root
            .clone()
            .or_else(|| self.config.model_dir.as_ref().and_then(|d| d.parent().map(PathBuf::from)))
    }

    /// Run blocking work on the inference pool, shedding load when the
    /// wait queue is full.
    async fn infer<T: Send + 'static>(&self, work: impl FnOnce() -> T + Send + 'static) -> ApiResult<T> {
        if self.waiting.fetch_add(1, Ordering::SeqCst) >= self.config.queue_capacity.max(1) {
            self.waiting.fetch_sub(1, Ordering::SeqCst);
            return Err(ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "overloaded", "inference queue full"));
        }
        let permit = self.workers.acquire().await;
        self.waiting.fetch_sub(1, Ordering::SeqCst);
        let _permit = permit.map_err(ApiError::internal)?;
        tokio::task::spawn_blocking(work).await.map_err(ApiError::internal)
    }
}

#[derive(Debug)]
enum Scope {
    Standard,
    Audit,
}

fn authorize(state: &AppState, headers: &HeaderMap) -> ApiResult<Scope> {
    if state.config.tokens.is_empty() {
        return Ok(Scope::Standard);
    }
    let presented = headers
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "))
        .map(str::trim);
    match presented.and_then(|p| state.config.tokens.iter().find(|t| t.token == p)) {
        Some(t) if t.audit => Ok(Scope::Audit),
        Some(_) => Ok(Scope::Standard),
        None => Err(ApiError::new(StatusCode::UNAUTHORIZED, "unauthorized", "missing or invalid bearer token")),
    }
}

#[derive(Debug, Deserialize)]
pub struct TextRequest {
    pub text: String,
    /// Ask for span details (honoured only with audit scope or privacy
    /// mode off).
    #[serde(default)]
    pub audit: bool,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct AnonymizeResponse {
    pub anonymized_text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spans: Option<Vec<RedactionSpan>>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ClassifyResponse {
    pub id: Option<String>,
    pub prediction: PredictionResult,
    pub anonymized_text: String,
    pub model_fingerprint: String,
}

fn require_text(text: &str) -> ApiResult<()> {
    if text.trim().is_empty() {
        Err(ApiError::new(StatusCode::BAD_REQUEST, "empty_text", "text must be non-empty"))
    } else {
        Ok(())
    }
}

/// Redact entities. Returns the redacted form and the text the model sees
/// (redacted, then normalized as in training).
fn anonymize(config: &AnonymizerConfig, text: &str, audit: bool) -> ApiResult<(String, String, Vec<RedactionSpan>)> {
    let mut anonymizer = Anonymizer::new(default_factory()(), config.fallback);
    let (normalized, redacted) = anonymizer
        .anonymize(text, &AnonymizerConfig {
            audit_mode: audit,
            ..config.clone()
        })
        .map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "anonymization_failed", e.to_string()))?;
    Ok((redacted.text, normalized, redacted.spans))
}

async fn anonymize_handler(
    State(state): State<Arc<AppState>>,
    headers: HeaderMap,
    body: Result<Json<TextRequest>, JsonRejection>,
) -> ApiResult<Json<AnonymizeResponse>> {
    let scope = authorize(&state, &headers)?;
    let Json(req) = body?;
    require_text(&req.text)?;
    let show_spans = !state.config.privacy_mode || matches!(scope, Scope::Audit);
    let (redacted, _, spans) = anonymize(&state.config.anonymizer, &req.text, show_spans && req.audit)?;
    Ok(Json(AnonymizeResponse {
        anonymized_text: redacted,
        spans: show_spans.then_some(spans),
    }))
}

fn new_id() -> String {
    // letter prefix keeps digit runs in ids from reading as phone numbers
    format!("s{:016x}", rand::thread_rng().gen::<u64>())
}

/// Copy of a prediction for storage with scores rounded to 1e-8, so no
/// persisted number carries a ten-digit fraction.
fn storable(p: &PredictionResult) -> PredictionResult {
    let mut out = p.clone();
    for v in out.scores.values_mut() {
        *v = (*v * 1e8).round() / 1e8;
    }
    out
}

async fn classify_handler(
    State(state): State<Arc<AppState>>,
    headers: HeaderMap,
    body: Result<Json<TextRequest>, JsonRejection>,
) -> ApiResult<Json<ClassifyResponse>> {
    authorize(&state, &headers)?;
    let Json(req) = body?;
    require_text(&req.text)?;
    let classifier = state.classifier()?;
    let config = state.config.anonymizer.clone();
    let text = req.text.clone();
    let (redacted, prediction) = state
        .infer(move || -> ApiResult<(String, PredictionResult)> {
            let (redacted, normalized, _) = anonymize(&config, &text, false)?;
            let input = if normalized.trim().is_empty() { redacted.as_str() } else { normalized.as_str() };
            let prediction = classifier
                .predict(input)
                .map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "prediction_failed", e.to_string()))?;
            Ok((redacted, prediction))
        })
        .await??;

    let id = match &state.store {
        Some(store) => {
            let now = Utc::now();
            let submission = Submission {
                id: new_id(),
                received_at: now,
                updated_at: now,
                anonymized_text: redacted.clone(),
                raw_text: (!state.config.privacy_mode).then(|| req.text.clone()),
                prediction: storable(&prediction),
                operator_feedback: None,
                status: SubmissionStatus::AutoClassified,
            };
            store.insert(&submission)?;
            Some(submission.id)
        }
        None => None,
    };
    Ok(Json(ClassifyResponse {
        id,
        model_fingerprint: prediction.model_fingerprint.clone(),
        prediction,
        anonymized_text: redacted,
    }))
}

fn store_of(state: &AppState) -> ApiResult<&Arc<dyn SubmissionStore>> {
    state
        .store
        .as_ref()
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "persistence_disabled", "submission storage is disabled"))
}

#[derive(Debug, Deserialize)]
pub struct Page {
    #[serde(default = "default_limit")]
    pub limit: usize,
    #[serde(default)]
    pub offset: usize,
}

fn default_limit() -> usize {
    20
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SubmissionPage {
    pub items: Vec<Submission>,
    pub total: usize,
    pub limit: usize,
    pub offset: usize,
}

async fn list_handler(
    State(state): State<Arc<AppState>>,
    headers: HeaderMap,
    Query(page): Query<Page>,
) -> ApiResult<Json<SubmissionPage>> {
    authorize(&state, &headers)?;
    let limit = page.limit.clamp(1, 500);
    let (items, total) = store_of(&state)?.list(limit, page.offset)?;
    Ok(Json(SubmissionPage {
        items,
        total,
        limit,
        offset: page.offset,
    }))
}

async fn get_handler(
    State(state): State<Arc<AppState>>,
    headers: HeaderMap,
    UrlPath(id): UrlPath<String>,
) -> ApiResult<Json<Submission>> {
    authorize(&state, &headers)?;
    store_of(&state)?
        .get(&id)?
        .map(Json)
        .ok_or_else(|| StoreError::NotFound(id).into())
}

#[derive(Debug, Deserialize)]
pub struct ReviewRequest {
    pub corrected_label: String,
}

async fn review_handler(
    State(state): State<Arc<AppState>>,
    headers: HeaderMap,
    UrlPath(id): UrlPath<String>,
    body: Result<Json<ReviewRequest>, JsonRejection>,
) -> ApiResult<Json<Submission>> {
    authorize(&state, &headers)?;
    let Json(req) = body?;
    let store = store_of(&state)?;
    if store.get(&id)?.is_none() {
        return Err(StoreError::NotFound(id).into());
    }
    let label: CategoryLabel = req.corrected_label.parse().map_err(|_| {
        ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_label", "label is not a known category")
            .detail(req.corrected_label.clone())
    })?;
    let updated = store.update(&id, &mut |s| {
        s.operator_feedback = Some(label);
        s.status = SubmissionStatus::Reviewed;
        s.updated_at = monotonic_now(s.updated_at);
    })?;
    Ok(Json(updated))
}

fn monotonic_now(previous: DateTime<Utc>) -> DateTime<Utc> {
    Utc::now().max(previous + Duration::microseconds(1))
}

/// Reviewed submissions in the corpus file format, labelled with the
/// operator's correction.
pub fn export_reviewed(store: &dyn SubmissionStore) -> Result<Vec<u8>, String> {
    let complaints: Vec<Complaint> = store
        .all()
        .map_err(|e| e.to_string())?
        .into_iter()
        .filter(|s| s.status == SubmissionStatus::Reviewed)
        .filter_map(|s| Some(Complaint::labeled(s.id, s.anonymized_text, s.operator_feedback?)))
        .collect();
    let mut out = Vec::new();
    write_complaints_to(&mut out, &complaints).map_err(|e| e.to_string())?;
    Ok(out)
}

async fn export_handler(State(state): State<Arc<AppState>>, headers: HeaderMap) -> ApiResult<Response> {
    authorize(&state, &headers)?;
    let body = export_reviewed(store_of(&state)?.as_ref()).map_err(ApiError::internal)?;
    Ok(([(header::CONTENT_TYPE, "text/csv; charset=utf-8")], body).into_response())
}

#[derive(Debug, Serialize, Deserialize)]
pub struct HealthResponse {
    /// `ok`, `loading` or `degraded`.
    pub status: String,
    pub model_fingerprint: Option<String>,
    pub uptime_seconds: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

async fn health_handler(State(state): State<Arc<AppState>>) -> Response {
    let (status, fingerprint, detail) = match &*state.model.read().expect("model lock") {
        ModelSlot::Ready(m) => ("ok", Some(m.classifier.fingerprint().to_string()), None),
        ModelSlot::Loading => ("loading", None, None),
        ModelSlot::Unavailable(why) => ("degraded", None, Some(why.clone())),
    };
    let code = if status == "ok" { StatusCode::OK } else { StatusCode::SERVICE_UNAVAILABLE };
    let body = HealthResponse {
        status: status.into(),
        model_fingerprint: fingerprint,
        uptime_seconds: state.started.elapsed().as_secs_f64(),
        detail,
    };
    (code, Json(body)).into_response()
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ActiveModel {
    pub kind: String,
    pub fingerprint: String,
    pub path: PathBuf,
}

#[derive(Debug, Serialize)]
pub struct ModelsResponse {
    /// Order in which score vectors and label palettes are presented.
    pub label_order: Vec<CategoryLabel>,
    pub active: Option<ActiveModel>,
    pub models: Vec<CheckpointInfo>,
}

async fn models_handler(State(state): State<Arc<AppState>>, headers: HeaderMap) -> ApiResult<Json<ModelsResponse>> {
    authorize(&state, &headers)?;
    let active = match &*state.model.read().expect("model lock") {
        ModelSlot::Ready(m) => Some((
            ActiveModel {
                kind: m.classifier.kind().to_string(),
                fingerprint: m.classifier.fingerprint().to_string(),
                path: m.path.clone(),
            },
            m.classifier.label_order().to_vec(),
        )),
        _ => None,
    };
    let models = match state.models_root() {
        Some(root) => tokio::task::spawn_blocking(move || discover(&root))
            .await
            .map_err(ApiError::internal)?,
        None => Vec::new(),
    };
    let (active, label_order) = match active {
        Some((a, order)) => (Some(a), order),
        None => (None, CategoryLabel::ALL.to_vec()),
    };
    Ok(Json(ModelsResponse {
        label_order,
        active,
        models,
    }))
}

async fn not_found() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such endpoint")
}

pub fn router(state: Arc<AppState>) -> Router {
    let limit = state.config.max_body_bytes;
    Router::new()
        .route("/api/v1/classify", post(classify_handler))
        .route("/api/v1/anonymize", post(anonymize_handler))
        .route("/api/v1/submissions", get(list_handler))
        .route("/api/v1/submissions/export", get(export_handler))
        .route("/api/v1/submissions/{id}", get(get_handler))
        .route("/api/v1/submissions/{id}/review", post(review_handler))
        .route("/api/v1/health", get(health_handler))
        .route("/api/v1/models", get(models_handler))
        .fallback(not_found)
        .layer(DefaultBodyLimit::max(limit))
        .with_state(state)
}

/// Bind, start loading the model and serve until ctrl-c.
pub async fn serve(config: ServiceConfig) -> Result<(), Box<dyn std::error::Error + Send + Sync>> {
    if config.tokens.is_empty() {
        log::warn!("no API tokens configured; authentication is disabled");
    }
    if !config.privacy_mode {
        log::warn!("privacy mode is off; raw complaint text will be persisted");
    }
    let bind = config.bind;
    let state = AppState::from_config(config)?;
    state.load_model_in_background();
    let listener = tokio::net::TcpListener::bind(bind).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
