//! The `/api/v1` HTTP interface. Errors are `application/problem+json`.

use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use image::ExtendedColorType;
use serde::{Deserialize, Serialize};
use serde_json::json;

use streetstage_core::frames::encode_png;
use streetstage_core::geo::{self, vertical_fov_for};
use streetstage_core::render::{paint_quads, MASK_GREEN};
use streetstage_core::scene_file::{ActorDoc, KeyframeDoc, TrajectoryDoc};
use streetstage_core::{camera_at, sample_scene, ActorId, CameraPose, Diagnostic, Scene, SceneDoc, Viewport};
use streetstage_imagery::{BBox, ImageryClient, ImageryError, NodeRecord};
use streetstage_jobs::{JobState, MaskState, QueueError, RenderJob, RenderQueue};

use crate::config::Config;
use crate::pipeline::{panorama_for, stage_scene, PipelineError};
use crate::projects::{ProjectError, ProjectStore, ProjectView};

#[derive(Clone)]
pub struct AppState {
    pub config: Arc<Config>,
    pub imagery: Arc<ImageryClient>,
    pub projects: Arc<ProjectStore>,
    pub queue: Arc<RenderQueue>,
}

/// A problem-details error body.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Problem {
    #[serde(rename = "type")]
    pub kind: String,
    pub title: String,
    pub status: u16,
    pub detail: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub diagnostics: Vec<Diagnostic>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub current_revision: Option<u64>,
}

impl Problem {
    pub fn new(status: StatusCode, detail: impl Into<String>) -> Self {
        Self {
            kind: "about:blank".into(),
            title: status.canonical_reason().unwrap_or("error").into(),
            status: status.as_u16(),
            detail: detail.into(),
            diagnostics: Vec::new(),
            current_revision: None,
        }
    }
}

impl IntoResponse for Problem {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        let body = serde_json::to_vec(&self).expect("problem serializes");
        (status, [(header::CONTENT_TYPE, "application/problem+json")], body).into_response()
    }
}

impl From<ProjectError> for Problem {
    fn from(e: ProjectError) -> Self {
        match e {
            ProjectError::NotFound(_) => Problem::new(StatusCode::NOT_FOUND, e.to_string()),
            ProjectError::Conflict { current, .. } => {
                Problem { current_revision: Some(current), ..Problem::new(StatusCode::CONFLICT, e.to_string()) }
            }
            ProjectError::Invalid(ref d) => {
                Problem { diagnostics: d.clone(), ..Problem::new(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()) }
            }
            ProjectError::BadRequest(_) => Problem::new(StatusCode::BAD_REQUEST, e.to_string()),
            ProjectError::Io { .. } => Problem::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
        }
    }
}

impl From<ImageryError> for Problem {
    fn from(e: ImageryError) -> Self {
        let status = match e {
            ImageryError::NotFound(_) => StatusCode::NOT_FOUND,
            ImageryError::InvalidBbox(_) | ImageryError::LimitTooLarge { .. } | ImageryError::NotPanoramic(_) => {
                StatusCode::BAD_REQUEST
            }
            ImageryError::QuotaExceeded => StatusCode::TOO_MANY_REQUESTS,
            ImageryError::ProviderUnavailable(_) => StatusCode::BAD_GATEWAY,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        Problem::new(status, e.to_string())
    }
}

impl From<PipelineError> for Problem {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Invalid(d) => Problem {
                diagnostics: d,
                ..Problem::new(StatusCode::UNPROCESSABLE_ENTITY, "scene is invalid")
            },
            PipelineError::Imagery(e) => e.into(),
            PipelineError::Bundle(e) => Problem::new(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()),
            other => Problem::new(StatusCode::INTERNAL_SERVER_ERROR, other.to_string()),
        }
    }
}

impl From<QueueError> for Problem {
    fn from(e: QueueError) -> Self {
        Problem::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string())
    }
}

type ApiResult<T> = Result<T, Problem>;

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> ApiResult<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .unwrap_or_else(|e| Err(Problem::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string())))
}

fn png(image: &image::RgbImage) -> Response {
    let bytes = encode_png(image.as_raw(), image.width(), image.height(), ExtendedColorType::Rgb8).expect("png encodes");
    ([(header::CONTENT_TYPE, "image/png")], bytes).into_response()
}

pub fn router(state: AppState) -> Router {
    let api = Router::new()
        .route("/config", get(ui_config))
        .route("/nodes", get(search_nodes))
        .route("/nodes/{id}", get(get_node))
        .route("/nodes/{id}/view", get(node_view))
        .route("/projects", get(list_projects).post(create_project))
        .route("/projects/{id}", get(get_project).put(put_project))
        .route("/projects/{id}/actors", post(upsert_actor))
        .route("/projects/{id}/actors/{actor}", axum::routing::delete(delete_actor))
        .route("/projects/{id}/trajectory", post(set_trajectory))
        .route("/projects/{id}/keyframes", post(set_keyframe))
        .route("/projects/{id}/sample", get(sample))
        .route("/projects/{id}/preview", get(preview))
        .route("/projects/{id}/unproject", post(unproject))
        .route("/projects/{id}/render", post(render))
        .route("/jobs", get(list_jobs))
        .route("/jobs/{id}", get(poll_job))
        .route("/jobs/{id}/frames/{k}", get(job_frame));
    let mut app = Router::new().nest("/api/v1", api);
    if let Some(dir) = state.config.server.ui_dir.clone().filter(|d| d.is_dir()) {
        app = app.fallback_service(tower_http::services::ServeDir::new(dir));
    }
    app.with_state(state)
}

async fn ui_config(State(s): State<AppState>) -> Json<serde_json::Value> {
    Json(json!({
        "tile_url": s.config.server.tile_url,
        "imagery_provider": s.imagery.provider_name(),
        "backend": s.config.backend.kind,
    }))
}

#[derive(Deserialize)]
struct NodeQuery {
    bbox: String,
    limit: Option<usize>,
}

async fn search_nodes(State(s): State<AppState>, Query(q): Query<NodeQuery>) -> ApiResult<Json<Vec<NodeRecord>>> {
    blocking(move || {
        let bbox = BBox::parse(&q.bbox)?;
        let nodes = s.imagery.search_nodes(&bbox, q.limit.unwrap_or(100))?;
        Ok(Json(nodes.iter().map(NodeRecord::from).collect()))
    })
    .await
}

async fn get_node(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<NodeRecord>> {
    blocking(move || Ok(Json(NodeRecord::from(&s.imagery.node(&id)?)))).await
}

/// View parameters. Angles are degrees unless given as `*_rad`, which lets a
/// client reproduce a camera from `/sample` exactly.
#[derive(Debug, Default, Deserialize)]
pub struct ViewQuery {
    pub heading: Option<f64>,
    pub pitch: Option<f64>,
    pub fov: Option<f64>,
    pub heading_rad: Option<f64>,
    pub pitch_rad: Option<f64>,
    pub fov_rad: Option<f64>,
    pub w: Option<u32>,
    pub h: Option<u32>,
}

const MAX_VIEW_PIXELS: u64 = 4096 * 4096;

async fn node_view(State(s): State<AppState>, Path(id): Path<String>, Query(q): Query<ViewQuery>) -> ApiResult<Response> {
    blocking(move || {
        let viewport = Viewport::new(q.w.unwrap_or(1280), q.h.unwrap_or(720));
        if viewport.width == 0 || viewport.height == 0 || u64::from(viewport.width) * u64::from(viewport.height) > MAX_VIEW_PIXELS {
            return Err(Problem::new(StatusCode::BAD_REQUEST, "w and h must be positive and at most 4096x4096 pixels"));
        }
        let angle = |rad: Option<f64>, deg: Option<f64>, default: f64| rad.or(deg.map(f64::to_radians)).unwrap_or(default);
        let heading = angle(q.heading_rad, q.heading, 0.0);
        let pitch = angle(q.pitch_rad, q.pitch, 0.0);
        let fov = angle(q.fov_rad, q.fov, 90f64.to_radians());
        let fov_ok = fov > 0.0 && fov < std::f64::consts::PI;
        let pitch_ok = pitch.abs() <= std::f64::consts::FRAC_PI_2;
        if !fov_ok || !pitch_ok || !heading.is_finite() {
            return Err(Problem::new(StatusCode::BAD_REQUEST, "fov must be in (0, 180) and pitch in [-90, 90] degrees"));
        }
        let node = s.imagery.node(&id)?;
        let pano = s.imagery.fetch_panorama(&node)?;
        let camera = CameraPose {
            position: node.position,
            heading: geo::normalize_heading(heading),
            pitch,
            horizontal_fov: fov,
            vertical_fov: vertical_fov_for(fov, viewport),
            height: 0.0,
        };
        Ok(png(&pano.render_view(&camera, viewport)))
    })
    .await
}

async fn list_projects(State(s): State<AppState>) -> Json<Vec<ProjectView>> {
    Json(s.projects.list().iter().map(ProjectView::from).collect())
}

#[derive(Deserialize)]
#[serde(untagged)]
enum CreateProject {
    Scene { scene: SceneDoc },
    Node { node_id: String, scene_prompt: Option<String> },
}

fn scene_from_doc(doc: SceneDoc) -> ApiResult<Scene> {
    doc.into_scene().map_err(|e| Problem::new(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()))
}

async fn create_project(State(s): State<AppState>, Json(body): Json<CreateProject>) -> ApiResult<(StatusCode, Json<ProjectView>)> {
    blocking(move || {
        let scene = match body {
            CreateProject::Scene { scene } => scene_from_doc(scene)?,
            CreateProject::Node { node_id, scene_prompt } => {
                // Start looking along the node's capture direction.
                let node = s.imagery.node(&node_id)?;
                let camera = CameraPose::new(
                    node.position,
                    node.compass_angle,
                    0.0,
                    90f64.to_radians(),
                    streetstage_core::staging::DEFAULT_CAMERA_HEIGHT_M,
                    streetstage_core::staging::DEFAULT_VIEWPORT,
                )
                .map_err(|e| Problem::new(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()))?;
                let mut scene = Scene::new(node_id, camera);
                scene.scene_prompt = scene_prompt.unwrap_or_default();
                scene
            }
        };
        let project = s.projects.create(scene)?;
        Ok((StatusCode::CREATED, Json(ProjectView::from(&project))))
    })
    .await
}

async fn get_project(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<ProjectView>> {
    Ok(Json(ProjectView::from(&s.projects.get(&id)?)))
}

#[derive(Deserialize)]
struct PutProject {
    revision: u64,
    scene: SceneDoc,
}

async fn put_project(State(s): State<AppState>, Path(id): Path<String>, Json(body): Json<PutProject>) -> ApiResult<Json<ProjectView>> {
    blocking(move || {
        let scene = scene_from_doc(body.scene)?;
        let p = s.projects.update(&id, body.revision, "scene replaced", move |current| {
            *current = scene;
            Ok(())
        })?;
        Ok(Json(ProjectView::from(&p)))
    })
    .await
}

/// Runs one scene edit through the project store on a blocking thread.
async fn edit(
    s: AppState,
    id: String,
    revision: u64,
    change: String,
    f: impl FnOnce(&mut Scene) -> Result<(), ProjectError> + Send + 'static,
) -> ApiResult<Json<ProjectView>> {
    blocking(move || Ok(Json(ProjectView::from(&s.projects.update(&id, revision, &change, f)?)))).await
}

fn actor_from_doc(doc: ActorDoc) -> Result<streetstage_core::Actor, ProjectError> {
    doc.into_actor("actor").map_err(|e| ProjectError::BadRequest(e.to_string()))
}

#[derive(Deserialize)]
struct ActorBody {
    revision: u64,
    actor: ActorDoc,
}

/// Adds an actor, or replaces the one with the same id.
async fn upsert_actor(State(s): State<AppState>, Path(id): Path<String>, Json(body): Json<ActorBody>) -> ApiResult<Json<ProjectView>> {
    let change = format!("actor {}", body.actor.id);
    edit(s, id, body.revision, change, move |scene| {
        let actor = actor_from_doc(body.actor)?;
        match scene.actors.iter_mut().find(|a| a.id == actor.id) {
            Some(slot) => *slot = actor,
            None => scene.actors.push(actor),
        }
        Ok(())
    })
    .await
}

#[derive(Deserialize)]
struct RevisionQuery {
    revision: u64,
}

async fn delete_actor(
    State(s): State<AppState>,
    Path((id, actor)): Path<(String, String)>,
    Query(q): Query<RevisionQuery>,
) -> ApiResult<Json<ProjectView>> {
    edit(s, id, q.revision, format!("removed actor {actor}"), move |scene| {
        let before = scene.actors.len();
        scene.actors.retain(|a| a.id.0 != actor);
        if scene.actors.len() == before {
            return Err(ProjectError::NotFound(format!("actor {actor}")));
        }
        Ok(())
    })
    .await
}

#[derive(Deserialize)]
struct TrajectoryBody {
    revision: u64,
    actor_id: String,
    /// `null` removes the trajectory.
    trajectory: Option<TrajectoryDoc>,
}

async fn set_trajectory(State(s): State<AppState>, Path(id): Path<String>, Json(body): Json<TrajectoryBody>) -> ApiResult<Json<ProjectView>> {
    let change = format!("trajectory {}", body.actor_id);
    edit(s, id, body.revision, change, move |scene| {
        let actor_id = ActorId(body.actor_id.clone());
        let Some(actor) = scene.actor(&actor_id) else {
            return Err(ProjectError::NotFound(format!("actor {}", body.actor_id)));
        };
        let mut doc = ActorDoc {
            id: body.actor_id.clone(),
            lat_deg: actor.anchor.lat_deg(),
            lon_deg: actor.anchor.lon_deg(),
            width_m: actor.width,
            height_m: actor.height,
            prompt: actor.prompt.clone(),
            reference_image: actor.reference_image.clone(),
            trajectory: body.trajectory,
        };
        // A sketched path starts where the actor is drawn.
        if let Some(first) = doc.trajectory.as_ref().and_then(|t| t.points.first()) {
            (doc.lat_deg, doc.lon_deg) = (first[0], first[1]);
        }
        let updated = actor_from_doc(doc)?;
        *scene.actor_mut(&actor_id).expect("actor exists") = updated;
        Ok(())
    })
    .await
}

#[derive(Deserialize)]
struct KeyframeBody {
    revision: u64,
    keyframe: KeyframeDoc,
}

/// Adds a keyframe, replacing any at the same time.
async fn set_keyframe(State(s): State<AppState>, Path(id): Path<String>, Json(body): Json<KeyframeBody>) -> ApiResult<Json<ProjectView>> {
    let k = body.keyframe;
    edit(s, id, body.revision, format!("keyframe at {} s", k.t_s), move |scene| {
        scene.set_keyframe(streetstage_core::CameraKeyframe {
            time: k.t_s,
            heading: geo::normalize_heading(k.heading_deg.to_radians()),
            pitch: k.pitch_deg.to_radians(),
            horizontal_fov: k.hfov_deg.to_radians(),
        });
        Ok(())
    })
    .await
}

#[derive(Deserialize)]
struct TimeQuery {
    #[serde(default)]
    t: f64,
}

fn check_time(scene: &Scene, t: f64) -> ApiResult<()> {
    if !(t >= 0.0 && t <= scene.duration) {
        return Err(Problem::new(StatusCode::BAD_REQUEST, format!("t must be within [0, {}]", scene.duration)));
    }
    Ok(())
}

async fn sample(State(s): State<AppState>, Path(id): Path<String>, Query(q): Query<TimeQuery>) -> ApiResult<Json<streetstage_core::SceneSample>> {
    let scene = s.projects.get(&id)?.scene;
    check_time(&scene, q.t)?;
    Ok(Json(sample_scene(&scene, q.t)))
}

async fn preview(State(s): State<AppState>, Path(id): Path<String>, Query(q): Query<TimeQuery>) -> ApiResult<Response> {
    blocking(move || {
        let scene = s.projects.get(&id)?.scene;
        check_time(&scene, q.t)?;
        let pano = panorama_for(&s.imagery, &scene)?;
        let sample = sample_scene(&scene, q.t);
        let mut frame = pano.render_view(&sample.camera, scene.resolution);
        paint_quads(&mut frame, &sample, MASK_GREEN);
        Ok(png(&frame))
    })
    .await
}

#[derive(Deserialize)]
struct UnprojectBody {
    u: f64,
    v: f64,
    #[serde(default)]
    t: f64,
}

/// The ground point under a pixel of the street view, for placing actors by clicking.
async fn unproject(State(s): State<AppState>, Path(id): Path<String>, Json(b): Json<UnprojectBody>) -> ApiResult<Json<serde_json::Value>> {
    let scene = s.projects.get(&id)?.scene;
    check_time(&scene, b.t)?;
    let camera = camera_at(&scene, b.t);
    let p = geo::unproject_to_ground(b.u, b.v, &camera, scene.resolution)
        .map_err(|e| Problem::new(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()))?;
    Ok(Json(json!({ "lat_deg": p.lat_deg(), "lon_deg": p.lon_deg() })))
}

async fn render(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult<(StatusCode, Json<serde_json::Value>)> {
    blocking(move || {
        let project = s.projects.get(&id)?;
        let bundle = stage_scene(&s.imagery, &project.scene, &s.config.staging_dir())?;
        let job_id = s.queue.submit(bundle)?;
        s.projects.add_job(&id, &job_id)?;
        Ok((StatusCode::ACCEPTED, Json(json!({ "job_id": job_id, "revision": project.revision }))))
    })
    .await
}

/// A job as the render queue panel sees it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JobView {
    pub job_id: String,
    pub bundle_id: String,
    pub state: JobState,
    pub masks: Vec<MaskView>,
    pub attempts: u32,
    pub error: Option<String>,
    pub frame_count: usize,
    pub result_dir: Option<PathBuf>,
    pub submitted_ms: u64,
    pub started_ms: Option<u64>,
    pub finished_ms: Option<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MaskView {
    pub actor_id: String,
    pub prompt: String,
    pub state: MaskState,
}

impl From<&RenderJob> for JobView {
    fn from(j: &RenderJob) -> Self {
        Self {
            job_id: j.job_id.clone(),
            bundle_id: j.bundle.bundle_id.clone(),
            state: j.state,
            masks: j
                .bundle
                .masks
                .iter()
                .zip(&j.masks)
                .map(|(m, s)| MaskView { actor_id: m.actor_id.clone(), prompt: m.prompt.clone(), state: *s })
                .collect(),
            attempts: j.attempts,
            error: j.error.clone(),
            frame_count: j.result.as_ref().map_or(0, |r| r.len()),
            result_dir: j.result.as_ref().map(|r| r.dir.clone()),
            submitted_ms: j.submitted_ms,
            started_ms: j.started_ms,
            finished_ms: j.finished_ms,
        }
    }
}

async fn list_jobs(State(s): State<AppState>) -> Json<Vec<JobView>> {
    Json(s.queue.jobs().iter().map(JobView::from).collect())
}

async fn poll_job(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<JobView>> {
    s.queue
        .poll(&id)
        .map(|j| Json(JobView::from(&j)))
        .ok_or_else(|| Problem::new(StatusCode::NOT_FOUND, format!("no job {id}")))
}

/// One frame of a finished job's result, for the video player.
async fn job_frame(State(s): State<AppState>, Path((id, k)): Path<(String, usize)>) -> ApiResult<Response> {
    let job = s.queue.poll(&id).ok_or_else(|| Problem::new(StatusCode::NOT_FOUND, format!("no job {id}")))?;
    let result = job.result.ok_or_else(|| Problem::new(StatusCode::CONFLICT, format!("job {id} has no result yet")))?;
    if k >= result.len() {
        return Err(Problem::new(StatusCode::NOT_FOUND, format!("job {id} has {} frames", result.len())));
    }
    let bytes = tokio::fs::read(result.frame_path(k))
        .await
        .map_err(|e| Problem::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
    Ok(([(header::CONTENT_TYPE, "image/png")], bytes).into_response())
}
