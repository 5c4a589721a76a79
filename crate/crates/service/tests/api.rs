mod common;

use std::time::{Duration, Instant};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use common::{broken_path, config, demo_path};
use streetstage::{app_state, router};
use streetstage_core::render::{paint_quads, preview_frame, MASK_GREEN};
use streetstage_core::{parse_scene, sample_scene, SceneSample};

struct Api {
    app: Router,
    _dir: tempfile::TempDir,
}

fn api() -> Api {
    let dir = tempfile::tempdir().unwrap();
    let state = app_state(config(dir.path())).unwrap();
    Api { app: router(state), _dir: dir }
}

struct Reply {
    status: StatusCode,
    content_type: String,
    body: Vec<u8>,
}

impl Reply {
    fn json(&self) -> Value {
        serde_json::from_slice(&self.body).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&self.body)))
    }
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> Reply {
    let mut req = Request::builder().method(method).uri(uri);
    let body = match body {
        Some(v) => {
            req = req.header("content-type", "application/json");
            Body::from(serde_json::to_vec(&v).unwrap())
        }
        None => Body::empty(),
    };
    let resp = app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
    let status = resp.status();
    let content_type =
        resp.headers().get("content-type").map(|v| v.to_str().unwrap().to_owned()).unwrap_or_default();
    let body = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    Reply { status, content_type, body }
}

fn demo_doc() -> Value {
    serde_json::from_str(&std::fs::read_to_string(demo_path()).unwrap()).unwrap()
}

async fn create_demo(app: &Router) -> (String, u64) {
    let r = call(app, "POST", "/api/v1/projects", Some(json!({ "scene": demo_doc() }))).await;
    assert_eq!(r.status, StatusCode::CREATED, "{}", String::from_utf8_lossy(&r.body));
    let v = r.json();
    (v["project_id"].as_str().unwrap().to_owned(), v["revision"].as_u64().unwrap())
}

#[tokio::test]
async fn node_search_and_errors() {
    let a = api();
    let r = call(&a.app, "GET", "/api/v1/nodes?bbox=-105.2710,40.0090,-105.2690,40.0110", None).await;
    assert_eq!(r.status, StatusCode::OK);
    let ids: Vec<String> = r.json().as_array().unwrap().iter().map(|n| n["id"].as_str().unwrap().to_owned()).collect();
    assert_eq!(ids, ["pano-c", "pano-a", "pano-b"]);

    let r = call(&a.app, "GET", "/api/v1/nodes?bbox=1,2,3", None).await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);
    assert_eq!(r.content_type, "application/problem+json");
    assert_eq!(r.json()["status"], 400);

    let r = call(&a.app, "GET", "/api/v1/nodes/nope", None).await;
    assert_eq!(r.status, StatusCode::NOT_FOUND);
    assert_eq!(r.content_type, "application/problem+json");
}

#[tokio::test]
async fn view_is_a_png_of_the_requested_size() {
    let a = api();
    let r = call(&a.app, "GET", "/api/v1/nodes/pano-b/view?heading=90&pitch=-5&fov=70&w=320&h=180", None).await;
    assert_eq!(r.status, StatusCode::OK);
    assert_eq!(r.content_type, "image/png");
    let img = image::load_from_memory(&r.body).unwrap();
    assert_eq!((img.width(), img.height()), (320, 180));

    let r = call(&a.app, "GET", "/api/v1/nodes/pano-b/view?fov=200", None).await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);
    let r = call(&a.app, "GET", "/api/v1/nodes/flat-d/view", None).await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn project_crud_with_revisions() {
    let a = api();
    let (id, rev) = create_demo(&a.app).await;
    assert_eq!(rev, 1);
    let got = call(&a.app, "GET", &format!("/api/v1/projects/{id}"), None).await.json();
    assert_eq!(got["scene"]["actors"].as_array().unwrap().len(), 2);

    let mut scene = got["scene"].clone();
    scene["scene_prompt"] = json!("rain at dusk");
    let r = call(&a.app, "PUT", &format!("/api/v1/projects/{id}"), Some(json!({ "revision": 1, "scene": scene }))).await;
    assert_eq!(r.status, StatusCode::OK);
    assert_eq!(r.json()["revision"], 2);

    // Stale revision.
    let r = call(&a.app, "PUT", &format!("/api/v1/projects/{id}"), Some(json!({ "revision": 1, "scene": scene }))).await;
    assert_eq!(r.status, StatusCode::CONFLICT);
    assert_eq!(r.content_type, "application/problem+json");
    assert_eq!(r.json()["current_revision"], 2);

    let list = call(&a.app, "GET", "/api/v1/projects", None).await.json();
    assert_eq!(list.as_array().unwrap().len(), 1);
}

#[tokio::test]
async fn exactly_one_of_two_conflicting_puts_wins() {
    let a = api();
    let (id, _) = create_demo(&a.app).await;
    let uri = format!("/api/v1/projects/{id}");
    for round in 0..5u64 {
        let rev = call(&a.app, "GET", &uri, None).await.json()["revision"].as_u64().unwrap();
        let mut s1 = demo_doc();
        s1["scene_prompt"] = json!(format!("first {round}"));
        let mut s2 = demo_doc();
        s2["scene_prompt"] = json!(format!("second {round}"));
        let (r1, r2) = tokio::join!(
            call(&a.app, "PUT", &uri, Some(json!({ "revision": rev, "scene": s1 }))),
            call(&a.app, "PUT", &uri, Some(json!({ "revision": rev, "scene": s2 }))),
        );
        let mut statuses = [r1.status.as_u16(), r2.status.as_u16()];
        statuses.sort();
        assert_eq!(statuses, [200, 409]);
        let after = call(&a.app, "GET", &uri, None).await.json();
        assert_eq!(after["revision"].as_u64().unwrap(), rev + 1);
    }
}

#[tokio::test]
async fn invalid_scenes_and_edits_are_rejected_with_diagnostics() {
    let a = api();
    let broken: Value = serde_json::from_str(&std::fs::read_to_string(broken_path()).unwrap()).unwrap();
    let r = call(&a.app, "POST", "/api/v1/projects", Some(json!({ "scene": broken }))).await;
    assert_eq!(r.status, StatusCode::UNPROCESSABLE_ENTITY);
    let paths: Vec<String> =
        r.json()["diagnostics"].as_array().unwrap().iter().map(|d| d["path"].as_str().unwrap().to_owned()).collect();
    assert_eq!(paths, ["actors[0].trajectory", "actors[1]"]);

    let (id, _) = create_demo(&a.app).await;
    let bad = json!({ "revision": 1, "actor_id": "cyclist",
        "trajectory": { "points": [[40.0101, -105.27], [40.0102, -105.27]], "start_s": 3.0, "end_s": 9.0 } });
    let r = call(&a.app, "POST", &format!("/api/v1/projects/{id}/trajectory"), Some(bad)).await;
    assert_eq!(r.status, StatusCode::UNPROCESSABLE_ENTITY);
    let got = call(&a.app, "GET", &format!("/api/v1/projects/{id}"), None).await.json();
    assert_eq!(got["revision"], 1);
}

#[tokio::test]
async fn staging_edits_bump_the_revision() {
    let a = api();
    let (id, _) = create_demo(&a.app).await;
    let base = format!("/api/v1/projects/{id}");

    let actor = json!({ "id": "dog", "lat_deg": 40.01012, "lon_deg": -105.27003, "width_m": 0.9, "height_m": 0.7, "prompt": "a dog" });
    let r = call(&a.app, "POST", &format!("{base}/actors"), Some(json!({ "revision": 1, "actor": actor }))).await;
    assert_eq!(r.status, StatusCode::OK, "{}", String::from_utf8_lossy(&r.body));
    assert_eq!(r.json()["revision"], 2);

    let traj = json!({ "revision": 2, "actor_id": "dog",
        "trajectory": { "points": [[40.01012, -105.27003], [40.01014, -105.26998]], "start_s": 1.0, "end_s": 3.0 } });
    let v = call(&a.app, "POST", &format!("{base}/trajectory"), Some(traj)).await.json();
    assert_eq!(v["revision"], 3);
    assert_eq!(v["scene"]["actors"][2]["trajectory"]["end_s"], 3.0);

    let key = json!({ "revision": 3, "keyframe": { "t_s": 2.5, "heading_deg": 15.0, "pitch_deg": -3.0, "hfov_deg": 70.0 } });
    let v = call(&a.app, "POST", &format!("{base}/keyframes"), Some(key)).await.json();
    assert_eq!(v["revision"], 4);
    assert_eq!(v["scene"]["keyframes"].as_array().unwrap().len(), 3);

    let r = call(&a.app, "DELETE", &format!("{base}/actors/dog?revision=4"), None).await;
    assert_eq!(r.json()["revision"], 5);
    assert_eq!(r.json()["scene"]["actors"].as_array().unwrap().len(), 2);
    let r = call(&a.app, "DELETE", &format!("{base}/actors/dog?revision=5"), None).await;
    assert_eq!(r.status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn sample_matches_the_core_call() {
    let a = api();
    let (id, _) = create_demo(&a.app).await;
    let scene = parse_scene(&std::fs::read_to_string(demo_path()).unwrap()).unwrap();
    for t in [0.0, 2.5] {
        let r = call(&a.app, "GET", &format!("/api/v1/projects/{id}/sample?t={t}"), None).await;
        assert_eq!(r.json(), serde_json::to_value(sample_scene(&scene, t)).unwrap());
    }
    let r = call(&a.app, "GET", &format!("/api/v1/projects/{id}/sample?t=6"), None).await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn view_plus_sample_overlay_equals_preview() {
    let a = api();
    let (id, _) = create_demo(&a.app).await;
    let scene = parse_scene(&std::fs::read_to_string(demo_path()).unwrap()).unwrap();
    let pano = streetstage_core::Panorama::decode(&std::fs::read(common::fixtures().join("imagery/pano-a.png")).unwrap(), 0.0)
        .unwrap();
    let t = 2.5;
    let sample: SceneSample =
        serde_json::from_slice(&call(&a.app, "GET", &format!("/api/v1/projects/{id}/sample?t={t}"), None).await.body).unwrap();
    let c = &sample.camera;
    let uri = format!(
        "/api/v1/nodes/pano-a/view?heading_rad={}&pitch_rad={}&fov_rad={}&w=1280&h=720",
        c.heading, c.pitch, c.horizontal_fov
    );
    let view = call(&a.app, "GET", &uri, None).await;
    let mut composed = image::load_from_memory(&view.body).unwrap().into_rgb8();
    paint_quads(&mut composed, &sample, MASK_GREEN);

    let preview = call(&a.app, "GET", &format!("/api/v1/projects/{id}/preview?t={t}"), None).await;
    let served = image::load_from_memory(&preview.body).unwrap().into_rgb8();
    let direct = preview_frame(&scene, &pano, t, MASK_GREEN);
    assert!(composed == direct, "view + overlay differs from the core preview");
    assert!(served == direct, "preview endpoint differs from the core preview");
}

#[tokio::test]
async fn clicking_a_card_foot_finds_its_anchor() {
    let a = api();
    let (id, _) = create_demo(&a.app).await;
    let scene = parse_scene(&std::fs::read_to_string(demo_path()).unwrap()).unwrap();
    let q = sample_scene(&scene, 0.0).quads.into_iter().find(|q| q.actor_id.0 == "pedestrian").unwrap();
    let r = call(&a.app, "POST", &format!("/api/v1/projects/{id}/unproject"), Some(json!({ "u": q.anchor_u, "v": q.anchor_v, "t": 0.0 })))
        .await
        .json();
    let p = &scene.actors[1].anchor;
    let (dlat, dlon) = (r["lat_deg"].as_f64().unwrap() - p.lat_deg(), r["lon_deg"].as_f64().unwrap() - p.lon_deg());
    let meters = (dlat.to_radians() * 6_371_008.8).hypot(dlon.to_radians() * 6_371_008.8 * p.lat().cos());
    assert!(meters < 0.01, "{meters} m");

    // Above the horizon there is no ground.
    let r = call(&a.app, "POST", &format!("/api/v1/projects/{id}/unproject"), Some(json!({ "u": 640.0, "v": 5.0 }))).await;
    assert_eq!(r.status, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test]
async fn render_reaches_done_with_eighty_frames() {
    let a = api();
    let (id, _) = create_demo(&a.app).await;
    let r = call(&a.app, "POST", &format!("/api/v1/projects/{id}/render"), None).await;
    assert_eq!(r.status, StatusCode::ACCEPTED, "{}", String::from_utf8_lossy(&r.body));
    let job_id = r.json()["job_id"].as_str().unwrap().to_owned();

    let deadline = Instant::now() + Duration::from_secs(120);
    let job = loop {
        let j = call(&a.app, "GET", &format!("/api/v1/jobs/{job_id}"), None).await.json();
        if j["state"] == "done" || j["state"] == "failed" {
            break j;
        }
        assert!(Instant::now() < deadline);
        tokio::time::sleep(Duration::from_millis(50)).await;
    };
    assert_eq!(job["state"], "done", "{job}");
    assert_eq!(job["frame_count"], 80);
    assert!(job["masks"].as_array().unwrap().iter().all(|m| m["state"] == "done"));

    let frame = call(&a.app, "GET", &format!("/api/v1/jobs/{job_id}/frames/79"), None).await;
    assert_eq!(frame.content_type, "image/png");
    let img = image::load_from_memory(&frame.body).unwrap();
    assert_eq!((img.width(), img.height()), (1280, 720));
    assert_eq!(call(&a.app, "GET", &format!("/api/v1/jobs/{job_id}/frames/80"), None).await.status, StatusCode::NOT_FOUND);

    let project = call(&a.app, "GET", &format!("/api/v1/projects/{id}"), None).await.json();
    assert_eq!(project["jobs"], json!([job_id]));
    // Rendering the unchanged project again lands on the same job.
    let again = call(&a.app, "POST", &format!("/api/v1/projects/{id}/render"), None).await.json();
    assert_eq!(again["job_id"], json!(job_id));
    let jobs = call(&a.app, "GET", "/api/v1/jobs", None).await.json();
    assert_eq!(jobs.as_array().unwrap().len(), 1);
}

#[tokio::test]
async fn project_from_a_node_starts_at_the_node() {
    let a = api();
    let r = call(&a.app, "POST", "/api/v1/projects", Some(json!({ "node_id": "pano-b" }))).await;
    assert_eq!(r.status, StatusCode::CREATED);
    let v = r.json();
    assert_eq!(v["scene"]["node_id"], "pano-b");
    assert!((v["scene"]["camera_base"]["heading_deg"].as_f64().unwrap() - 37.5).abs() < 1e-9);
    assert!((v["scene"]["camera_base"]["lat_deg"].as_f64().unwrap() - 40.0103).abs() < 1e-9);
}

#[tokio::test]
async fn config_describes_the_offline_setup() {
    let a = api();
    let v = call(&a.app, "GET", "/api/v1/config", None).await.json();
    assert_eq!(v["backend"], "mock");
    assert!(v["tile_url"].as_str().unwrap().contains("{z}"));
    assert!(v["imagery_provider"].is_string());
}
