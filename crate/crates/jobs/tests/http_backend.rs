//! The HTTP backend against an in-process generation server that runs the
//! mock compositor behind the wire protocol.

mod common;

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde_json::json;

use common::{small_scene, staged, tagged_bundle};
use streetstage_core::FrameSequenceRef;
use streetstage_jobs::archive::{pack_sequence, unpack_bundle};
use streetstage_jobs::{
    http_requests, Backend, BackendError, HttpBackend, JobState, MaskProgress, MockBackend, QueueConfig, RenderQueue,
};

const TOKEN: &str = "secret";

#[derive(Default)]
struct Remote {
    state: String,
    completed: usize,
    error: Option<String>,
    result: Option<FrameSequenceRef>,
}

#[derive(Clone)]
struct Server {
    root: PathBuf,
    jobs: Arc<Mutex<HashMap<String, Remote>>>,
    fail_mask: Option<usize>,
}

fn authorized(h: &HeaderMap) -> bool {
    h.get("authorization").and_then(|v| v.to_str().ok()) == Some(&format!("Bearer {TOKEN}"))
}

async fn create(State(s): State<Server>, headers: HeaderMap, body: Bytes) -> Response {
    if !authorized(&headers) {
        return StatusCode::UNAUTHORIZED.into_response();
    }
    let id = format!("remote-{}", s.jobs.lock().unwrap().len());
    let dir = s.root.join(&id);
    let bundle = match unpack_bundle(&body, &dir.join("in")) {
        Ok(b) => b,
        Err(e) => return (StatusCode::BAD_REQUEST, e.to_string()).into_response(),
    };
    s.jobs.lock().unwrap().insert(id.clone(), Remote { state: "pending".into(), ..Remote::default() });
    let (jobs, job) = (s.jobs.clone(), id.clone());
    std::thread::spawn(move || {
        let mut mock = MockBackend::new(Duration::from_millis(60));
        if let Some(i) = s.fail_mask {
            mock = mock.fail_mask(i);
        }
        let result = mock.run(&bundle, &job, &dir.join("out"), &mut |p| {
            let mut jobs = jobs.lock().unwrap();
            let r = jobs.get_mut(&job).unwrap();
            r.state = "running".into();
            if let MaskProgress::Done(i) = p {
                r.completed = i + 1;
            }
        });
        let mut jobs = jobs.lock().unwrap();
        let r = jobs.get_mut(&job).unwrap();
        match result {
            Ok(out) => {
                r.state = "done".into();
                r.result = Some(out);
            }
            Err(e) => {
                r.state = "failed".into();
                r.error = Some(e.to_string());
            }
        }
    });
    Json(json!({ "job_id": id })).into_response()
}

async fn status(State(s): State<Server>, headers: HeaderMap, Path(id): Path<String>) -> Response {
    if !authorized(&headers) {
        return StatusCode::UNAUTHORIZED.into_response();
    }
    match s.jobs.lock().unwrap().get(&id) {
        Some(r) => Json(json!({ "state": r.state, "completed_masks": r.completed, "error": r.error })).into_response(),
        None => StatusCode::NOT_FOUND.into_response(),
    }
}

async fn result(State(s): State<Server>, headers: HeaderMap, Path(id): Path<String>) -> Response {
    if !authorized(&headers) {
        return StatusCode::UNAUTHORIZED.into_response();
    }
    let out = s.jobs.lock().unwrap().get(&id).and_then(|r| r.result.clone());
    match out {
        Some(seq) => pack_sequence(&seq).unwrap().into_response(),
        None => StatusCode::NOT_FOUND.into_response(),
    }
}

fn serve(root: PathBuf, fail_mask: Option<usize>) -> String {
    let (tx, rx) = std::sync::mpsc::channel();
    std::thread::spawn(move || {
        let rt = tokio::runtime::Builder::new_current_thread().enable_all().build().unwrap();
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
            tx.send(format!("http://{}", listener.local_addr().unwrap())).unwrap();
            let state = Server { root, jobs: Arc::default(), fail_mask };
            let app = Router::new()
                .route("/jobs", post(create))
                .route("/jobs/{id}", get(status))
                .route("/jobs/{id}/result", get(result))
                .layer(axum::extract::DefaultBodyLimit::disable())
                .with_state(state);
            axum::serve(listener, app).await.unwrap();
        });
    });
    rx.recv().unwrap()
}

fn client(base: &str, token: &str) -> HttpBackend {
    HttpBackend::new(base, Some(token.into())).with_poll_interval(Duration::from_millis(10))
}

#[test]
fn remote_result_matches_local_mock() {
    let dir = tempfile::tempdir().unwrap();
    let base = serve(dir.path().join("server"), None);
    let bundle = staged(&small_scene(6), &dir.path().join("bundle"));

    let before = http_requests();
    let http = client(&base, TOKEN);
    let handle = http.submit(&bundle).unwrap();
    let mut log = Vec::new();
    let remote = http.run(&bundle, &handle, &dir.path().join("remote"), &mut |p| log.push(p)).unwrap();
    assert!(http_requests() > before + 2);
    assert_eq!(log, [MaskProgress::Started(0), MaskProgress::Done(0), MaskProgress::Started(1), MaskProgress::Done(1)]);

    let mock = MockBackend::new(Duration::ZERO);
    let local = mock.run(&bundle, "local", &dir.path().join("local"), &mut |_| {}).unwrap();
    assert_eq!(remote.manifest, local.manifest);
}

#[test]
fn bad_token_is_a_protocol_error_and_dead_server_is_retriable() {
    let dir = tempfile::tempdir().unwrap();
    let base = serve(dir.path().join("server"), None);
    let bundle = staged(&small_scene(2), &dir.path().join("bundle"));
    let err = client(&base, "wrong").submit(&bundle).unwrap_err();
    assert!(matches!(err, BackendError::Protocol(_)) && !err.is_retriable(), "{err}");

    let err = client("http://127.0.0.1:9", TOKEN).submit(&bundle).unwrap_err();
    assert!(err.is_retriable(), "{err}");
}

#[test]
fn remote_failure_names_the_mask() {
    let dir = tempfile::tempdir().unwrap();
    let base = serve(dir.path().join("server"), Some(1));
    let bundle = staged(&small_scene(2), &dir.path().join("bundle"));
    let http = client(&base, TOKEN);
    let handle = http.submit(&bundle).unwrap();
    let err = http.run(&bundle, &handle, &dir.path().join("out"), &mut |_| {}).unwrap_err();
    assert!(matches!(err, BackendError::MaskFailed { index: 1, .. }), "{err}");
}

#[test]
fn queue_drives_the_http_backend() {
    let dir = tempfile::tempdir().unwrap();
    let base = serve(dir.path().join("server"), None);
    let bundle = tagged_bundle("http", dir.path());
    let q = RenderQueue::open(QueueConfig::new(dir.path().join("q")), Arc::new(client(&base, TOKEN))).unwrap();
    let id = q.submit(bundle).unwrap();
    let job = q.wait(&id, Duration::from_secs(60)).unwrap();
    assert_eq!(job.state, JobState::Done, "{:?}", job.error);
    assert_eq!(job.result.unwrap().len(), 4);
}
