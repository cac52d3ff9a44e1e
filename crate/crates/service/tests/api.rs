use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Duration;

use axum::body::Body;
use axum::http::{header, HeaderMap, Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use policygraph_core::backend::{BackendError, CallKind, ConsequenceProposer, IndicatorLinker, LinkQuery, LinkVerdict};
use policygraph_core::dag::{Proposal, ProposalRequest};
use policygraph_core::{run_batch, BatchOptions, EpisodeRecord, Evaluator, Indicator, IndicatorVocabulary, RunConfig};
use policygraph_service::{router, AppState, EvaluatorFactory, JobHandle, JobState, ServiceOptions};
use serde_json::{json, Value};
use tower::ServiceExt;

struct Reply {
    status: StatusCode,
    headers: HeaderMap,
    body: Vec<u8>,
}

impl Reply {
    fn json(&self) -> Value {
        serde_json::from_slice(&self.body).unwrap()
    }
}

async fn call(app: &Router, method: Method, uri: &str, body: Option<Value>) -> Reply {
    let mut req = Request::builder().method(method).uri(uri);
    let body = match body {
        Some(v) => {
            req = req.header(header::CONTENT_TYPE, "application/json");
            Body::from(v.to_string())
        }
        None => Body::empty(),
    };
    let resp = app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
    let status = resp.status();
    let headers = resp.headers().clone();
    let body = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    Reply { status, headers, body }
}

async fn submit(app: &Router, body: Value) -> JobHandle {
    let r = call(app, Method::POST, "/api/v1/evaluate", Some(body)).await;
    assert_eq!(r.status, StatusCode::ACCEPTED, "{}", String::from_utf8_lossy(&r.body));
    serde_json::from_slice(&r.body).unwrap()
}

/// Polls until the job is terminal, returning every state seen.
async fn wait(app: &Router, handle: &JobHandle) -> (JobHandle, Vec<JobState>) {
    let mut seen = vec![handle.state];
    for _ in 0..500 {
        let r = call(app, Method::GET, &format!("/api/v1/jobs/{}", handle.job_id), None).await;
        assert_eq!(r.status, StatusCode::OK);
        let h: JobHandle = serde_json::from_slice(&r.body).unwrap();
        if seen.last() != Some(&h.state) {
            seen.push(h.state);
        }
        if h.state.is_terminal() {
            return (h, seen);
        }
        tokio::time::sleep(Duration::from_millis(10)).await;
    }
    panic!("job {} did not finish", handle.job_id);
}

fn stub_app() -> Router {
    router(AppState::new(ServiceOptions::default()))
}

fn rank(s: JobState) -> u8 {
    match s {
        JobState::Queued => 0,
        JobState::Running => 1,
        JobState::Done | JobState::Failed => 2,
    }
}

#[tokio::test]
async fn annotated_request_yields_metrics() {
    let app = stub_app();
    let h = submit(
        &app,
        json!({
            "description": "Raise the statutory retirement age by two years",
            "government_focus": ["government_debt", "fiscal_balance"],
            "relevance_set": ["government_debt", "labor_force_participation", "youth_unemployment"],
        }),
    )
    .await;
    assert!(matches!(h.state, JobState::Queued | JobState::Running));
    let (done, seen) = wait(&app, &h).await;
    assert_eq!(done.state, JobState::Done);
    assert!(seen.windows(2).all(|w| rank(w[0]) < rank(w[1])), "{seen:?}");
    let record = done.result.unwrap();
    record.check().unwrap();
    let m = record.metrics.unwrap();
    assert!(m.coverage.is_some() && m.discovery.is_some());
}

#[tokio::test]
async fn unannotated_request_has_null_metrics() {
    let app = stub_app();
    let h = submit(&app, json!({"description": "Cut fuel duty by 5p per litre"})).await;
    let (done, _) = wait(&app, &h).await;
    let r = call(&app, Method::GET, &format!("/api/v1/jobs/{}", h.job_id), None).await;
    assert!(r.json()["result"]["metrics"].is_null());
    assert!(done.result.unwrap().metrics.is_none());
}

#[tokio::test]
async fn validation_failures_are_listed() {
    let app = stub_app();
    let r = call(
        &app,
        Method::POST,
        "/api/v1/evaluate",
        Some(json!({"description": "  "})),
    )
    .await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);
    assert_eq!(r.json()["violations"], json!(["missing description"]));

    let r = call(
        &app,
        Method::POST,
        "/api/v1/evaluate",
        Some(json!({"description": "x", "relevance_set": ["gdp", "inflation"]})),
    )
    .await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);
    assert_eq!(
        r.json()["violations"][0],
        "unknown indicator id \"gdp\" in relevance_set"
    );

    let r = call(
        &app,
        Method::POST,
        "/api/v1/evaluate",
        Some(json!({"description": "x", "bogus": 1})),
    )
    .await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn profile_selection() {
    let app = stub_app();
    let r = call(
        &app,
        Method::POST,
        "/api/v1/evaluate",
        Some(json!({"description": "x", "profile": "nope"})),
    )
    .await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);

    let inline =
        json!({"description": "x", "profile": {"api_endpoint": "http://example.invalid", "backend": "remote"}});
    let r = call(&app, Method::POST, "/api/v1/evaluate", Some(inline)).await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);
    assert!(r.json()["error"].as_str().unwrap().contains("profile file"));

    let h = submit(
        &app,
        json!({"description": "Cut fuel duty", "profile": {"mode": "baseline", "max_depth": 1}}),
    )
    .await;
    let (done, _) = wait(&app, &h).await;
    let rec = done.result.unwrap();
    assert_eq!(rec.dag.unwrap().nodes.len(), 1);
    assert_eq!(rec.config.max_depth, 1);

    let profiles = call(&app, Method::GET, "/api/v1/profiles", None).await.json();
    assert!(profiles["default"].is_object());
}

#[tokio::test]
async fn unknown_jobs_are_404() {
    let app = stub_app();
    let id = uuid::Uuid::new_v4();
    for uri in [
        format!("/api/v1/jobs/{id}"),
        format!("/api/v1/jobs/{id}/record.json"),
        "/api/v1/jobs/not-a-uuid".to_string(),
    ] {
        assert_eq!(
            call(&app, Method::GET, &uri, None).await.status,
            StatusCode::NOT_FOUND,
            "{uri}"
        );
    }
}

#[tokio::test]
async fn indicators_are_stable_and_configurable() {
    let app = stub_app();
    let a = call(&app, Method::GET, "/api/v1/indicators", None).await;
    let b = call(&app, Method::GET, "/api/v1/indicators", None).await;
    assert_eq!(a.json()["indicators"].as_array().unwrap().len(), 19);
    assert_eq!(a.body, b.body);

    let five = IndicatorVocabulary::new(
        "five",
        (0..5)
            .map(|i| Indicator::new(format!("i{i}"), format!("Indicator {i}"), "test"))
            .collect(),
    )
    .unwrap();
    let app = router(AppState::new(ServiceOptions {
        vocab: Arc::new(five),
        ..ServiceOptions::default()
    }));
    let r = call(&app, Method::GET, "/api/v1/indicators", None).await.json();
    assert_eq!(r["indicators"].as_array().unwrap().len(), 5);
    assert_eq!(r["version"], "five");
}

#[tokio::test]
async fn record_download_matches_the_job_record() {
    let app = stub_app();
    let h = submit(
        &app,
        json!({"episode_id": "dl-1", "description": "Cut fuel duty", "relevance_set": ["inflation"]}),
    )
    .await;
    let (done, _) = wait(&app, &h).await;
    let r = call(
        &app,
        Method::GET,
        &format!("/api/v1/jobs/{}/record.json", h.job_id),
        None,
    )
    .await;
    assert_eq!(r.status, StatusCode::OK);
    assert_eq!(
        r.headers[header::CONTENT_DISPOSITION],
        "attachment; filename=\"dl-1.json\""
    );
    let parsed = EpisodeRecord::from_json(std::str::from_utf8(&r.body).unwrap()).unwrap();
    let in_memory = done.result.unwrap();
    assert_eq!(parsed, in_memory);
    assert_eq!(r.body, in_memory.to_json().into_bytes());
}

/// Proposer/linker that blocks until released, or fails on demand.
struct Gate {
    open: AtomicBool,
    fail: bool,
}

impl ConsequenceProposer for Gate {
    fn propose(&self, _: &ProposalRequest, _: f64, _: &mut Vec<String>) -> Result<Vec<Proposal>, BackendError> {
        while !self.open.load(Ordering::SeqCst) {
            std::thread::sleep(Duration::from_millis(5));
        }
        if self.fail {
            return Err(BackendError::Fatal {
                kind: CallKind::Propose,
                message: "model refused".into(),
            });
        }
        Ok(vec![])
    }
}

impl IndicatorLinker for Gate {
    fn link(&self, _: &LinkQuery, _: f64, _: &mut Vec<String>) -> Result<LinkVerdict, BackendError> {
        Ok(LinkVerdict::unaffected())
    }
}

fn gated_app(gate: Arc<Gate>, concurrency: usize, queue_capacity: usize) -> Router {
    let vocab = Arc::new(IndicatorVocabulary::default_vocabulary());
    let v = vocab.clone();
    let factory: EvaluatorFactory =
        Arc::new(move |config: &RunConfig| Ok(Evaluator::new(v.clone(), config.clone(), gate.clone(), gate.clone())));
    router(AppState::with_factory(
        ServiceOptions {
            vocab,
            concurrency,
            queue_capacity,
            ..ServiceOptions::default()
        },
        factory,
    ))
}

async fn wait_for_state(app: &Router, h: &JobHandle, want: JobState) {
    for _ in 0..500 {
        let r = call(app, Method::GET, &format!("/api/v1/jobs/{}", h.job_id), None).await;
        if serde_json::from_slice::<JobHandle>(&r.body).unwrap().state == want {
            return;
        }
        tokio::time::sleep(Duration::from_millis(5)).await;
    }
    panic!("job never reached {want:?}");
}

#[tokio::test]
async fn unfinished_record_is_409_and_full_queue_is_429() {
    let gate = Arc::new(Gate {
        open: AtomicBool::new(false),
        fail: false,
    });
    let app = gated_app(gate.clone(), 1, 1);
    let first = submit(&app, json!({"description": "first"})).await;
    wait_for_state(&app, &first, JobState::Running).await;
    let r = call(
        &app,
        Method::GET,
        &format!("/api/v1/jobs/{}/record.json", first.job_id),
        None,
    )
    .await;
    assert_eq!(r.status, StatusCode::CONFLICT);

    let second = submit(&app, json!({"description": "second"})).await;
    assert_eq!(second.state, JobState::Queued);
    let r = call(
        &app,
        Method::POST,
        "/api/v1/evaluate",
        Some(json!({"description": "third"})),
    )
    .await;
    assert_eq!(r.status, StatusCode::TOO_MANY_REQUESTS);

    gate.open.store(true, Ordering::SeqCst);
    assert_eq!(wait(&app, &first).await.0.state, JobState::Done);
    assert_eq!(wait(&app, &second).await.0.state, JobState::Done);
}

#[tokio::test]
async fn backend_failure_marks_the_job_failed() {
    let gate = Arc::new(Gate {
        open: AtomicBool::new(true),
        fail: true,
    });
    let app = gated_app(gate, 2, 8);
    let h = submit(&app, json!({"description": "anything"})).await;
    let (done, _) = wait(&app, &h).await;
    assert_eq!(done.state, JobState::Failed);
    assert!(done.failure.unwrap().contains("model refused"));
    let r = call(
        &app,
        Method::GET,
        &format!("/api/v1/jobs/{}/record.json", h.job_id),
        None,
    )
    .await;
    assert_eq!(r.status, StatusCode::CONFLICT);
}

#[tokio::test]
async fn static_assets_are_served() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("index.html"), "<h1>policygraph</h1>").unwrap();
    let app = router(AppState::new(ServiceOptions {
        static_dir: Some(dir.path().to_path_buf()),
        ..ServiceOptions::default()
    }));
    let r = call(&app, Method::GET, "/", None).await;
    assert_eq!(r.status, StatusCode::OK);
    assert_eq!(r.body, b"<h1>policygraph</h1>");
}

#[tokio::test]
async fn service_record_equals_batch_record() {
    let fixture = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/three_rows.xlsx");
    let out = tempfile::tempdir().unwrap();
    run_batch(&BatchOptions::new(&fixture, out.path()), &RunConfig::default()).unwrap();
    let batch_bytes = std::fs::read(out.path().join("de-2015-minwage.json")).unwrap();
    let batch: EpisodeRecord = EpisodeRecord::from_json(std::str::from_utf8(&batch_bytes).unwrap()).unwrap();

    let app = stub_app();
    let h = submit(
        &app,
        json!({
            "episode_id": batch.episode_id,
            "description": batch.input.description,
            "context": batch.input.context,
            "government_focus": batch.input.government_focus,
            "relevance_set": batch.input.relevance_set,
            "profile": "default",
        }),
    )
    .await;
    wait(&app, &h).await;
    let r = call(
        &app,
        Method::GET,
        &format!("/api/v1/jobs/{}/record.json", h.job_id),
        None,
    )
    .await;
    assert_eq!(r.body, batch_bytes);
}
