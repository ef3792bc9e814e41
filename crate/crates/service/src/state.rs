use std::collections::HashMap;
use std::future::Future;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, State};
use axum::http::{header, HeaderValue, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use tokio::sync::Mutex;
use tower_http::cors::{AllowOrigin, CorsLayer};

use chatrec::coldstart::{ingest_docs, EmbeddingCache};
use chatrec::dataset::{Dataset, UserId};
use chatrec::dialogue::{DialogueEngine, DialogueError, DialogueState};
use chatrec::eval::ReportStore;
use chatrec::llm::ProviderSpec;
use chatrec::recsys::{import_external_scores, CandidateSource, ModelFile, ModelKind};

use crate::api::*;
use crate::{ServerConfig, ServiceConfig, ServiceError};

/// One chat session and the dialogue state it owns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub session_id: String,
    pub user_id: UserId,
    pub created_at: String,
    pub provider: String,
    pub state: DialogueState,
}

struct Coldstart {
    cache: Arc<RwLock<EmbeddingCache>>,
    dir: Option<PathBuf>,
    ingest: Mutex<()>,
}

/// Shared server state: the immutable engine plus the live sessions.
pub struct AppState {
    engine: Arc<DialogueEngine>,
    sessions: RwLock<HashMap<String, Arc<Mutex<SessionRecord>>>>,
    reports: ReportStore,
    coldstart: Coldstart,
}

impl AppState {
    /// `cache` must be the one the engine was given with `with_coldstart`.
    pub fn new(engine: DialogueEngine, reports: ReportStore, cache: Arc<RwLock<EmbeddingCache>>, coldstart_dir: Option<PathBuf>) -> Self {
        Self {
            engine: Arc::new(engine),
            sessions: RwLock::new(HashMap::new()),
            reports,
            coldstart: Coldstart { cache, dir: coldstart_dir, ingest: Mutex::new(()) },
        }
    }

    pub fn engine(&self) -> &DialogueEngine {
        &self.engine
    }

    pub fn session_count(&self) -> usize {
        self.sessions.read().expect("sessions lock").len()
    }

    fn session(&self, id: &str) -> Result<Arc<Mutex<SessionRecord>>, ApiError> {
        self.sessions
            .read()
            .expect("sessions lock")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found("unknown_session", format!("no session {id:?}")))
    }

    /// Copies of every session, ordered by id.
    pub async fn snapshot(&self) -> Vec<SessionRecord> {
        let all: Vec<_> = self.sessions.read().expect("sessions lock").values().cloned().collect();
        let mut out = Vec::with_capacity(all.len());
        for s in all {
            out.push(s.lock().await.clone());
        }
        out.sort_by(|a, b| a.session_id.cmp(&b.session_id));
        out
    }

    pub async fn save_snapshot(&self, path: &Path) -> Result<(), ServiceError> {
        let err = |msg: String| ServiceError::Snapshot { path: path.display().to_string(), msg };
        let text = serde_json::to_string_pretty(&self.snapshot().await).map_err(|e| err(e.to_string()))?;
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, text).map_err(|e| err(e.to_string()))?;
        std::fs::rename(&tmp, path).map_err(|e| err(e.to_string()))
    }

    /// Adds sessions from a snapshot file; a missing file adds nothing.
    pub fn restore_snapshot(&self, path: &Path) -> Result<usize, ServiceError> {
        let err = |msg: String| ServiceError::Snapshot { path: path.display().to_string(), msg };
        let text = match std::fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(0),
            Err(e) => return Err(err(e.to_string())),
        };
        let records: Vec<SessionRecord> = serde_json::from_str(&text).map_err(|e| err(e.to_string()))?;
        let n = records.len();
        let mut map = self.sessions.write().expect("sessions lock");
        for r in records {
            map.insert(r.session_id.clone(), Arc::new(Mutex::new(r)));
        }
        Ok(n)
    }
}

#[derive(Debug)]
struct ApiError {
    status: StatusCode,
    body: Box<ErrorBody>,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        Self { status, body: Box::new(ErrorBody { error: ErrorDetail { code: code.into(), message: message.into() }, fallback: None }) }
    }

    fn not_found(code: &str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, code, message)
    }

    fn bad_request(code: &str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, code, message)
    }

    fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }
}

impl From<DialogueError> for ApiError {
    fn from(e: DialogueError) -> Self {
        match e {
            DialogueError::UnknownUser(_) => Self::not_found("unknown_user", e.to_string()),
            DialogueError::EmptyQuery => Self::bad_request("empty_query", e.to_string()),
            other => Self::new(StatusCode::BAD_GATEWAY, "turn_failed", other.to_string()),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(*self.body)).into_response()
    }
}

fn parse<T: DeserializeOwned>(body: &[u8]) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request("bad_request", e.to_string()))
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> T + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f).await.map_err(|e| ApiError::internal(e.to_string()))
}

fn now() -> String {
    humantime::format_rfc3339_seconds(std::time::SystemTime::now()).to_string()
}

async fn create_session(State(app): State<Arc<AppState>>, body: Bytes) -> Result<(StatusCode, Json<SessionCreated>), ApiError> {
    let req: CreateSession = parse(&body)?;
    let binding = app.engine.binding();
    let served = binding.id();
    if let Some(p) = &req.provider {
        if p != &served && p != &binding.gateway.provider_id() {
            return Err(ApiError::bad_request("unknown_provider", format!("provider {p:?} is not served; this server runs {served}")));
        }
    }
    let session_id = uuid::Uuid::new_v4().simple().to_string();
    let state = app.engine.new_session(session_id.clone(), req.user_id)?;
    let record = SessionRecord { session_id: session_id.clone(), user_id: req.user_id, created_at: now(), provider: served, state };
    let created = SessionCreated {
        session_id: session_id.clone(),
        user_id: record.user_id,
        created_at: record.created_at.clone(),
        provider: record.provider.clone(),
    };
    app.sessions.write().expect("sessions lock").insert(session_id, Arc::new(Mutex::new(record)));
    Ok((StatusCode::CREATED, Json(created)))
}

async fn post_message(State(app): State<Arc<AppState>>, UrlPath(id): UrlPath<String>, body: Bytes) -> Result<Json<MessageReply>, ApiError> {
    let msg: PostMessage = parse(&body)?;
    let session = app.session(&id)?;
    // The fair mutex queues concurrent submissions in arrival order.
    let mut guard = session.lock_owned().await;
    let engine = app.engine.clone();
    let (result, turn) = blocking(move || {
        let r = engine.handle_turn(&mut guard.state, &msg.text);
        (r, guard.state.history.len())
    })
    .await?;
    let reply = result?;
    Ok(Json(MessageReply { turn, reply }))
}

async fn get_session(State(app): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> Result<Json<Transcript>, ApiError> {
    let session = app.session(&id)?;
    let r = session.lock().await;
    Ok(Json(Transcript {
        session_id: r.session_id.clone(),
        user_id: r.user_id,
        created_at: r.created_at.clone(),
        provider: r.provider.clone(),
        turns: r.state.history.clone(),
    }))
}

async fn list_reports(State(app): State<Arc<AppState>>) -> Result<Json<ReportIndex>, ApiError> {
    let store = app.reports.clone();
    let reports = blocking(move || store.list()).await?.map_err(|e| ApiError::internal(e.to_string()))?;
    Ok(Json(ReportIndex { reports }))
}

async fn get_report(State(app): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> Result<Response, ApiError> {
    let store = app.reports.clone();
    let report = blocking(move || store.load(&id)).await?.map_err(|e| ApiError::not_found("unknown_report", e.to_string()))?;
    Ok(Json(report).into_response())
}

async fn ingest(State(app): State<Arc<AppState>>, body: Bytes) -> Result<Json<IngestResult>, ApiError> {
    let req: IngestDocs = parse(&body)?;
    // One ingestion at a time; readers keep using the old cache until the
    // finished one is swapped in.
    let _one = app.coldstart.ingest.lock().await;
    let app2 = app.clone();
    let result = blocking(move || {
        let cs = &app2.coldstart;
        let mut next = cs.cache.read().expect("cache lock").clone();
        let report = ingest_docs(&req.docs, &app2.engine.binding().gateway, &mut next);
        if let Some(dir) = &cs.dir {
            next.persist(dir).map_err(|e| ApiError::internal(e.to_string()))?;
        }
        let cached = next.len();
        *cs.cache.write().expect("cache lock") = next;
        Ok::<_, ApiError>(IngestResult { report, cached })
    })
    .await??;
    Ok(Json(result))
}

async fn health() -> Json<Health> {
    Json(Health::ok())
}

fn cors(origins: &[String]) -> CorsLayer {
    let allow = if origins.iter().any(|o| o == "*") {
        AllowOrigin::any()
    } else {
        AllowOrigin::list(origins.iter().filter_map(|o| HeaderValue::from_str(o).ok()))
    };
    CorsLayer::new().allow_origin(allow).allow_methods([Method::GET, Method::POST]).allow_headers([header::CONTENT_TYPE])
}

pub fn router(state: Arc<AppState>, cors_origins: &[String]) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/messages", post(post_message))
        .route("/reports", get(list_reports))
        .route("/reports/{id}", get(get_report))
        .route("/coldstart/docs", post(ingest))
        .route("/health", get(health))
        .layer(cors(cors_origins))
        .with_state(state)
}

/// Loads the dataset, prepares the recommender and provider, and restores
/// any session snapshot. The recommender sees every rating in the dataset.
pub fn build_state(config: &ServiceConfig) -> Result<AppState, ServiceError> {
    let startup = |e: &dyn std::fmt::Display| ServiceError::Startup(e.to_string());
    let dataset = Dataset::load(&config.data_dir)
        .map_err(|e| ServiceError::Startup(format!("{e}\n(get MovieLens-100K with `python3 scripts/fetch_ml100k.py`)")))?;
    let events = dataset.ratings.events();
    let source: Arc<dyn CandidateSource> = match config.candidates.strip_prefix("external:") {
        Some(path) => Arc::new(import_external_scores(path).map_err(|e| startup(&e))?),
        None => {
            let kind: ModelKind = config.candidates.parse().map_err(|e| startup(&e))?;
            let model = match &config.model_file {
                Some(p) => ModelFile::load(p).map_err(|e| startup(&e))?,
                None => {
                    tracing::info!(?kind, "training recommender on all ratings");
                    ModelFile::train(kind, events, config.seed).map_err(|e| startup(&e))?
                }
            };
            if model.kind() != kind {
                return Err(ServiceError::Startup(format!("model file holds {:?}, config asks for {kind:?}", model.kind())));
            }
            model.into_shared().0
        }
    };
    let spec: ProviderSpec = config.provider.parse().map_err(|e| startup(&e))?;
    let binding = spec.binding(&config.http).map_err(|e| startup(&e))?;
    let cache_model = binding.gateway.provider_id();
    let cache = match &config.coldstart_dir {
        Some(dir) => EmbeddingCache::load_or_new(dir, &cache_model).map_err(|e| startup(&e))?,
        None => EmbeddingCache::new(cache_model),
    };
    let cache = Arc::new(RwLock::new(cache));
    let engine = DialogueEngine::new(&dataset, events, source, binding).with_config(config.dialogue.clone()).with_coldstart(cache.clone());
    let state = AppState::new(engine, ReportStore::new(&config.reports_dir), cache, config.coldstart_dir.clone());
    if let Some(p) = &config.snapshot {
        let n = state.restore_snapshot(p)?;
        tracing::info!(sessions = n, path = %p.display(), "restored sessions");
    }
    Ok(state)
}

/// Serves until `shutdown` resolves, then writes the session snapshot when
/// one is configured.
pub async fn serve(
    state: Arc<AppState>,
    server: &ServerConfig,
    snapshot: Option<&Path>,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> Result<(), ServiceError> {
    let listener = tokio::net::TcpListener::bind((server.host.as_str(), server.port)).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router(state.clone(), &server.cors_origins)).with_graceful_shutdown(shutdown).await?;
    if let Some(p) = snapshot {
        state.save_snapshot(p).await?;
        tracing::info!(path = %p.display(), "saved sessions");
    }
    Ok(())
}
