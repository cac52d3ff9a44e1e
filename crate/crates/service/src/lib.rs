//! HTTP front end for single-episode evaluation.
//!
//! Routes, all JSON:
//!
//! - `POST /api/v1/evaluate` queues an episode and answers `202` with a job handle
//! - `GET /api/v1/jobs/{job_id}` reports the job, embedding the record when done
//! - `GET /api/v1/jobs/{job_id}/record.json` downloads the finished record
//! - `GET /api/v1/indicators` lists the active vocabulary
//! - `GET /api/v1/profiles` lists the named configuration profiles
//!
//! Anything else is served from the static directory, when one is configured.

mod jobs;
mod profiles;

use std::collections::{BTreeMap, HashMap};
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use policygraph_core::model::validate_episode;
use policygraph_core::{ConfigOverrides, Evaluator, IndicatorVocabulary, PolicyEpisode, RunConfig};
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;
use tokio::sync::Semaphore;
use tower_http::services::ServeDir;
use uuid::Uuid;

pub use jobs::{JobHandle, JobState, JobStore};
pub use profiles::{load_profiles, DEFAULT_PROFILE};

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("profile: {0}")]
    Profile(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Which configuration to run with: a profile name, or overrides applied to
/// the default profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProfileSelector {
    Named(String),
    Inline(ConfigOverrides),
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluationRequest {
    /// Defaults to a generated `episode-<hex>` id.
    #[serde(default)]
    pub episode_id: Option<String>,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub context: BTreeMap<String, String>,
    #[serde(default)]
    pub government_focus: Vec<String>,
    #[serde(default)]
    pub relevance_set: Vec<String>,
    #[serde(default)]
    pub profile: Option<ProfileSelector>,
}

impl EvaluationRequest {
    pub fn to_episode(&self) -> PolicyEpisode {
        let id = self
            .episode_id
            .clone()
            .unwrap_or_else(|| format!("episode-{}", &Uuid::new_v4().simple().to_string()[..8]));
        PolicyEpisode {
            episode_id: id,
            description: self.description.trim().to_string(),
            context: self.context.clone(),
            government_focus: self.government_focus.iter().map(|s| s.trim().to_string()).collect(),
            relevance_set: self.relevance_set.iter().map(|s| s.trim().to_string()).collect(),
        }
    }
}

/// Builds an evaluator for a resolved configuration.
pub type EvaluatorFactory = Arc<dyn Fn(&RunConfig) -> Result<Evaluator, String> + Send + Sync>;

/// Connects real backends, reusing one evaluator (and so one rate limiter)
/// per distinct configuration.
pub fn connecting_factory(vocab: Arc<IndicatorVocabulary>) -> EvaluatorFactory {
    let cache: Mutex<HashMap<String, Evaluator>> = Mutex::new(HashMap::new());
    Arc::new(move |config: &RunConfig| {
        let key = serde_json::to_string(config).expect("config serializes");
        let mut cache = cache.lock().unwrap();
        if let Some(ev) = cache.get(&key) {
            return Ok(ev.clone());
        }
        let ev = Evaluator::connect(vocab.clone(), config.clone()).map_err(|e| e.to_string())?;
        cache.insert(key, ev.clone());
        Ok(ev)
    })
}

#[derive(Debug, Clone)]
pub struct ServiceOptions {
    pub vocab: Arc<IndicatorVocabulary>,
    pub profiles: BTreeMap<String, RunConfig>,
    /// Evaluations running at once.
    pub concurrency: usize,
    /// Jobs allowed to wait for a slot before new requests get `429`.
    pub queue_capacity: usize,
    pub static_dir: Option<PathBuf>,
}

impl Default for ServiceOptions {
    fn default() -> Self {
        Self {
            vocab: Arc::new(IndicatorVocabulary::default_vocabulary()),
            profiles: BTreeMap::from([(DEFAULT_PROFILE.to_string(), RunConfig::default())]),
            concurrency: 4,
            queue_capacity: 64,
            static_dir: None,
        }
    }
}

pub struct AppState {
    options: ServiceOptions,
    jobs: JobStore,
    permits: Arc<Semaphore>,
    factory: EvaluatorFactory,
}

impl AppState {
    pub fn new(options: ServiceOptions) -> Arc<Self> {
        let factory = connecting_factory(options.vocab.clone());
        Self::with_factory(options, factory)
    }

    pub fn with_factory(options: ServiceOptions, factory: EvaluatorFactory) -> Arc<Self> {
        Arc::new(Self {
            permits: Arc::new(Semaphore::new(options.concurrency.max(1))),
            options,
            jobs: JobStore::default(),
            factory,
        })
    }

    pub fn jobs(&self) -> &JobStore {
        &self.jobs
    }

    fn resolve_profile(&self, selector: Option<&ProfileSelector>) -> Result<RunConfig, ApiError> {
        let named = |name: &str| {
            self.options
                .profiles
                .get(name)
                .cloned()
                .ok_or_else(|| ApiError::bad_request(format!("unknown profile {name:?}")))
        };
        let config = match selector {
            None => named(DEFAULT_PROFILE)?,
            Some(ProfileSelector::Named(name)) => named(name)?,
            Some(ProfileSelector::Inline(overrides)) => {
                // endpoints and credential names come from profile files only
                if overrides.api_endpoint.is_some() || overrides.api_key_ref.is_some() {
                    return Err(ApiError::bad_request(
                        "api_endpoint and api_key_ref can only be set in a profile file",
                    ));
                }
                named(DEFAULT_PROFILE)?.with_overrides(overrides)
            }
        };
        config
            .validate()
            .map_err(|e| ApiError::bad_request(format!("invalid configuration: {e}")))?;
        Ok(config)
    }
}

struct ApiError {
    status: StatusCode,
    message: String,
    violations: Vec<String>,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
            violations: Vec::new(),
        }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, message)
    }

    fn not_found() -> Self {
        Self::new(StatusCode::NOT_FOUND, "no such job")
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut body = json!({ "error": self.message });
        if !self.violations.is_empty() {
            body["violations"] = json!(self.violations);
        }
        (self.status, Json(body)).into_response()
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    let api = Router::new()
        .route("/api/v1/evaluate", post(evaluate))
        .route("/api/v1/jobs/{job_id}", get(job))
        .route("/api/v1/jobs/{job_id}/record.json", get(record_download))
        .route("/api/v1/indicators", get(indicators))
        .route("/api/v1/profiles", get(profiles_list));
    let api = match &state.options.static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    };
    api.with_state(state)
}

async fn evaluate(
    State(app): State<Arc<AppState>>,
    body: Result<Json<EvaluationRequest>, JsonRejection>,
) -> Result<Response, ApiError> {
    let Json(request) = body.map_err(|e| ApiError::bad_request(e.body_text()))?;
    let config = app.resolve_profile(request.profile.as_ref())?;
    let episode = request.to_episode();
    let violations = validate_episode(&episode, &app.options.vocab);
    if !violations.is_empty() {
        let mut err = ApiError::bad_request("validation failed");
        err.violations = violations.iter().map(ToString::to_string).collect();
        return Err(err);
    }
    let evaluator = (app.factory)(&config)
        .map_err(|e| ApiError::new(StatusCode::SERVICE_UNAVAILABLE, format!("backend unavailable: {e}")))?;
    let id = app
        .jobs
        .enqueue(app.options.queue_capacity)
        .ok_or_else(|| ApiError::new(StatusCode::TOO_MANY_REQUESTS, "job queue is full"))?;
    let handle = app.jobs.handle(id).expect("job was just added");
    tokio::spawn(run_job(app.clone(), id, evaluator, episode));

    let location = HeaderValue::from_str(&format!("/api/v1/jobs/{id}")).expect("uuid is ascii");
    Ok((StatusCode::ACCEPTED, [(header::LOCATION, location)], Json(handle)).into_response())
}

async fn run_job(app: Arc<AppState>, id: Uuid, evaluator: Evaluator, episode: PolicyEpisode) {
    let _permit = app
        .permits
        .clone()
        .acquire_owned()
        .await
        .expect("semaphore is never closed");
    app.jobs.start(id);
    match tokio::task::spawn_blocking(move || evaluator.evaluate(&episode)).await {
        Ok(record) if record.is_ok() => app.jobs.finish(id, record),
        Ok(record) => app.jobs.fail(id, record.status.message.clone(), Some(record)),
        Err(e) => app.jobs.fail(id, format!("internal error: {e}"), None),
    }
}

fn parse_job_id(raw: &str) -> Result<Uuid, ApiError> {
    Uuid::parse_str(raw).map_err(|_| ApiError::not_found())
}

async fn job(State(app): State<Arc<AppState>>, Path(job_id): Path<String>) -> Result<Json<JobHandle>, ApiError> {
    let id = parse_job_id(&job_id)?;
    app.jobs.handle(id).map(Json).ok_or_else(ApiError::not_found)
}

/// Keeps a file name safe inside a quoted header parameter.
fn header_file_name(id: &str) -> String {
    id.chars()
        .map(|c| {
            if c.is_ascii_graphic() && c != '"' && c != '\\' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

async fn record_download(State(app): State<Arc<AppState>>, Path(job_id): Path<String>) -> Result<Response, ApiError> {
    let id = parse_job_id(&job_id)?;
    let (state, record) = app.jobs.record(id).ok_or_else(ApiError::not_found)?;
    let record = match (state, record) {
        (JobState::Done, Some(r)) => r,
        (state, _) => {
            return Err(ApiError::new(
                StatusCode::CONFLICT,
                format!(
                    "job is {}",
                    serde_json::to_value(state)
                        .expect("state serializes")
                        .as_str()
                        .unwrap_or("")
                ),
            ))
        }
    };
    let disposition = format!("attachment; filename=\"{}.json\"", header_file_name(&record.episode_id));
    Ok((
        [
            (header::CONTENT_TYPE, HeaderValue::from_static("application/json")),
            (
                header::CONTENT_DISPOSITION,
                HeaderValue::from_str(&disposition).expect("sanitized header"),
            ),
        ],
        record.to_json(),
    )
        .into_response())
}

async fn indicators(State(app): State<Arc<AppState>>) -> Json<IndicatorVocabulary> {
    Json(app.options.vocab.as_ref().clone())
}

async fn profiles_list(State(app): State<Arc<AppState>>) -> Json<BTreeMap<String, RunConfig>> {
    Json(app.options.profiles.clone())
}

/// Binds `addr` and serves until the process is stopped.
pub async fn serve(addr: SocketAddr, state: Arc<AppState>) -> Result<(), ServiceError> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state)).await?;
    Ok(())
}
