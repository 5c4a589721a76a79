//! The staged scene: actors with sketched paths and keyframed camera work on a
//! short fixed-length timeline.

use std::collections::{BTreeMap, HashSet};
use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::{
    self, camera_relative_angles, enu_offset, enu_to_geo, normalize_heading, project_point, range_bearing,
    wrap_angle, CameraPose, EnuOffset, GeoError, GeoPoint, RelativeAngles, ScreenPoint, Viewport, Visibility,
};

pub const DEFAULT_DURATION_S: f64 = 5.0;
pub const DEFAULT_FPS: f64 = 16.0;
pub const DEFAULT_VIEWPORT: Viewport = Viewport::new(1280, 720);
pub const DEFAULT_CAMERA_HEIGHT_M: f64 = 2.5;
pub const DEFAULT_ACTOR_WIDTH_M: f64 = 0.6;
pub const DEFAULT_ACTOR_HEIGHT_M: f64 = 1.7;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StagingError {
    #[error("trajectory has zero arc length")]
    DegenerateSketch,
    #[error(transparent)]
    Geo(#[from] GeoError),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ActorId(pub String);

impl fmt::Display for ActorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for ActorId {
    fn from(s: &str) -> Self {
        ActorId(s.to_owned())
    }
}

/// A path sketched on the map, walked at constant speed between
/// `start_time` and `end_time`. Before and after that window the actor holds
/// at the first and last point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub sketch: Vec<GeoPoint>,
    pub start_time: f64,
    pub end_time: f64,
}

impl Trajectory {
    pub fn first(&self) -> Option<GeoPoint> {
        self.sketch.first().copied()
    }

    pub fn last(&self) -> Option<GeoPoint> {
        self.sketch.last().copied()
    }
}

/// Position along `traj` at time `t`, with arc length measured on the tangent
/// plane at `origin` (the camera node).
pub fn resample_trajectory(traj: &Trajectory, t: f64, origin: GeoPoint) -> Result<GeoPoint, StagingError> {
    let (first, last) = match (traj.first(), traj.last()) {
        (Some(f), Some(l)) if traj.sketch.len() >= 2 => (f, l),
        _ => return Err(StagingError::DegenerateSketch),
    };
    let points = traj
        .sketch
        .iter()
        .map(|p| enu_offset(*p, origin))
        .collect::<Result<Vec<_>, _>>()?;
    let lengths: Vec<f64> = points
        .windows(2)
        .map(|w| (w[1].east - w[0].east).hypot(w[1].north - w[0].north))
        .collect();
    let total: f64 = lengths.iter().sum();
    if total.is_nan() || total <= 0.0 {
        return Err(StagingError::DegenerateSketch);
    }
    if t <= traj.start_time {
        return Ok(first);
    }
    if t >= traj.end_time {
        return Ok(last);
    }

    let target = total * (t - traj.start_time) / (traj.end_time - traj.start_time);
    let mut walked = 0.0;
    for (i, len) in lengths.iter().enumerate() {
        if *len > 0.0 && walked + len >= target {
            let f = (target - walked) / len;
            let (a, b) = (points[i], points[i + 1]);
            let p = EnuOffset::new(a.east + (b.east - a.east) * f, a.north + (b.north - a.north) * f);
            return Ok(enu_to_geo(p, origin)?);
        }
        walked += len;
    }
    Ok(last)
}

/// A proxy card standing on the ground, later replaced by generated content.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Actor {
    pub id: ActorId,
    pub anchor: GeoPoint,
    pub width: f64,
    pub height: f64,
    pub trajectory: Option<Trajectory>,
    pub prompt: String,
    pub reference_image: Option<String>,
}

impl Actor {
    pub fn new(id: impl Into<String>, anchor: GeoPoint) -> Self {
        Self {
            id: ActorId(id.into()),
            anchor,
            width: DEFAULT_ACTOR_WIDTH_M,
            height: DEFAULT_ACTOR_HEIGHT_M,
            trajectory: None,
            prompt: String::new(),
            reference_image: None,
        }
    }

    /// Attaches a path and moves the anchor onto its first point.
    pub fn with_trajectory(mut self, trajectory: Trajectory) -> Self {
        if let Some(first) = trajectory.first() {
            self.anchor = first;
        }
        self.trajectory = Some(trajectory);
        self
    }

    pub fn position_at(&self, t: f64, origin: GeoPoint) -> Result<GeoPoint, StagingError> {
        match &self.trajectory {
            Some(traj) => resample_trajectory(traj, t, origin),
            None => Ok(self.anchor),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraKeyframe {
    pub time: f64,
    pub heading: f64,
    pub pitch: f64,
    pub horizontal_fov: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub node_id: String,
    /// Position and mounting height of the camera; its orientation seeds the
    /// first keyframe.
    pub camera_base: CameraPose,
    /// Sorted by time, first at `t = 0`.
    pub keyframes: Vec<CameraKeyframe>,
    pub actors: Vec<Actor>,
    pub duration: f64,
    pub fps: f64,
    pub resolution: Viewport,
    pub scene_prompt: String,
    /// Backend sampling overrides, passed through untouched.
    pub sampling: BTreeMap<String, serde_json::Value>,
}

impl Scene {
    /// A scene with the default timeline and a single keyframe taken from `camera_base`.
    pub fn new(node_id: impl Into<String>, camera_base: CameraPose) -> Self {
        let keyframe = CameraKeyframe {
            time: 0.0,
            heading: camera_base.heading,
            pitch: camera_base.pitch,
            horizontal_fov: camera_base.horizontal_fov,
        };
        Self {
            node_id: node_id.into(),
            camera_base,
            keyframes: vec![keyframe],
            actors: Vec::new(),
            duration: DEFAULT_DURATION_S,
            fps: DEFAULT_FPS,
            resolution: DEFAULT_VIEWPORT,
            scene_prompt: String::new(),
            sampling: BTreeMap::new(),
        }
    }

    /// Number of frames on the timeline.
    pub fn frame_count(&self) -> usize {
        (self.duration * self.fps).round() as usize
    }

    /// Timestamp of frame `k` (frame-start convention).
    pub fn frame_time(&self, k: usize) -> f64 {
        k as f64 / self.fps
    }

    /// Inserts or replaces the keyframe at `keyframe.time`, keeping the list sorted.
    pub fn set_keyframe(&mut self, keyframe: CameraKeyframe) {
        match self.keyframes.binary_search_by(|k| k.time.total_cmp(&keyframe.time)) {
            Ok(i) => self.keyframes[i] = keyframe,
            Err(i) => self.keyframes.insert(i, keyframe),
        }
    }

    pub fn actor(&self, id: &ActorId) -> Option<&Actor> {
        self.actors.iter().find(|a| &a.id == id)
    }

    pub fn actor_mut(&mut self, id: &ActorId) -> Option<&mut Actor> {
        self.actors.iter_mut().find(|a| &a.id == id)
    }
}

/// Camera pose at time `t`: linear between bracketing keyframes (heading along
/// the shorter arc), held outside them.
pub fn camera_at(scene: &Scene, t: f64) -> CameraPose {
    let keys = &scene.keyframes;
    let (heading, pitch, fov) = match keys.iter().position(|k| k.time > t) {
        _ if keys.is_empty() => (
            scene.camera_base.heading,
            scene.camera_base.pitch,
            scene.camera_base.horizontal_fov,
        ),
        Some(0) => (keys[0].heading, keys[0].pitch, keys[0].horizontal_fov),
        None => {
            let k = keys[keys.len() - 1];
            (k.heading, k.pitch, k.horizontal_fov)
        }
        Some(i) => {
            let (a, b) = (keys[i - 1], keys[i]);
            let f = (t - a.time) / (b.time - a.time);
            (
                a.heading + wrap_angle(b.heading - a.heading) * f,
                a.pitch + (b.pitch - a.pitch) * f,
                a.horizontal_fov + (b.horizontal_fov - a.horizontal_fov) * f,
            )
        }
    };
    CameraPose {
        heading: normalize_heading(heading),
        pitch,
        horizontal_fov: fov,
        vertical_fov: geo::vertical_fov_for(fov, scene.resolution),
        ..scene.camera_base
    }
}

/// Half-open integer pixel rectangle `[x0, x1) x [y0, y1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PixelRect {
    pub x0: u32,
    pub y0: u32,
    pub x1: u32,
    pub y1: u32,
}

impl PixelRect {
    pub fn is_empty(&self) -> bool {
        self.x0 >= self.x1 || self.y0 >= self.y1
    }

    pub fn contains(&self, x: u32, y: u32) -> bool {
        x >= self.x0 && x < self.x1 && y >= self.y0 && y < self.y1
    }

    pub fn area(&self) -> u64 {
        if self.is_empty() {
            0
        } else {
            u64::from(self.x1 - self.x0) * u64::from(self.y1 - self.y0)
        }
    }
}

/// An actor's card on screen. Edges are in continuous pixel coordinates; a
/// pixel is covered when its centre lies inside `[left, right) x [top, bottom)`,
/// which is what `pixels` records after clipping to the viewport.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreenQuad {
    pub actor_id: ActorId,
    pub visibility: Visibility,
    /// Projection of the ground anchor (bottom centre).
    pub anchor_u: f64,
    pub anchor_v: f64,
    pub left: f64,
    pub right: f64,
    pub top: f64,
    pub bottom: f64,
    pub pixels: PixelRect,
}

impl ScreenQuad {
    pub fn center_u(&self) -> f64 {
        self.anchor_u
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActorFailure {
    pub actor_id: ActorId,
    pub error: String,
}

/// Everything the overlay needs at one instant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSample {
    pub time: f64,
    pub camera: CameraPose,
    pub quads: Vec<ScreenQuad>,
    pub failures: Vec<ActorFailure>,
}

/// Keeps `tan` finite for edges that swing past the side of the frustum.
const EDGE_LIMIT: f64 = FRAC_PI_2 - 1e-9;

fn edge_to_pixels(angle: f64, half_fov: f64, extent: u32) -> f64 {
    geo::scale_axis(angle.clamp(-EDGE_LIMIT, EDGE_LIMIT).tan() / half_fov.tan(), extent)
}

fn covered_range(lo: f64, hi: f64, extent: u32) -> (u32, u32) {
    let clamp = |x: f64| (x - 0.5).ceil().clamp(0.0, f64::from(extent)) as u32;
    let (a, b) = (clamp(lo), clamp(hi));
    (a, b.max(a))
}

/// Projects one actor's card. `None` when its ground anchor is behind the camera.
pub fn project_actor_quad(
    actor: &Actor,
    position: GeoPoint,
    camera: &CameraPose,
    viewport: Viewport,
) -> Result<Option<ScreenQuad>, StagingError> {
    let range = range_bearing(enu_offset(position, camera.position)?);
    let base = camera_relative_angles(range, camera, 0.0);
    let (anchor_u, anchor_v, visibility) = match project_point(base, camera, viewport) {
        ScreenPoint::BehindCamera => return Ok(None),
        ScreenPoint::OnScreen { u, v } => (u, v, Visibility::OnScreen),
        ScreenPoint::OffScreen { u, v } => (u, v, Visibility::OffScreen),
    };
    let top_angles = camera_relative_angles(range, camera, actor.height);
    let half_width = (actor.width / (2.0 * range.distance)).atan();

    let half_h = camera.horizontal_fov / 2.0;
    let half_v = camera.vertical_fov / 2.0;
    let left = edge_to_pixels(base.azimuth - half_width, half_h, viewport.width);
    let right = edge_to_pixels(base.azimuth + half_width, half_h, viewport.width);
    // Screen y grows downward, so the elevation sign flips.
    let top = edge_to_pixels(-top_angles.elevation, half_v, viewport.height);
    let bottom = anchor_v;

    let (x0, x1) = covered_range(left, right, viewport.width);
    let (y0, y1) = covered_range(top, bottom, viewport.height);
    Ok(Some(ScreenQuad {
        actor_id: actor.id.clone(),
        visibility,
        anchor_u,
        anchor_v,
        left,
        right,
        top,
        bottom,
        pixels: PixelRect { x0, y0, x1, y1 },
    }))
}

/// Cards for every actor at time `t`. Actors behind the camera are omitted;
/// per-actor failures are reported without dropping the others.
pub fn sample_scene(scene: &Scene, t: f64) -> SceneSample {
    let camera = camera_at(scene, t);
    let mut quads = Vec::new();
    let mut failures = Vec::new();
    for actor in &scene.actors {
        let result = actor
            .position_at(t, camera.position)
            .and_then(|pos| project_actor_quad(actor, pos, &camera, scene.resolution));
        match result {
            Ok(Some(q)) => quads.push(q),
            Ok(None) => {}
            Err(e) => failures.push(ActorFailure { actor_id: actor.id.clone(), error: e.to_string() }),
        }
    }
    SceneSample { time: t, camera, quads, failures }
}

/// Relative angles of an actor's ground anchor, exposed for callers that want
/// the intermediate values rather than pixels.
pub fn actor_angles(scene: &Scene, actor: &Actor, t: f64) -> Result<RelativeAngles, StagingError> {
    let camera = camera_at(scene, t);
    let pos = actor.position_at(t, camera.position)?;
    Ok(camera_relative_angles(range_bearing(enu_offset(pos, camera.position)?), &camera, 0.0))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub path: String,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

/// Checks every scene invariant; an empty list means the scene is usable.
pub fn validate_scene(scene: &Scene) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let mut report = |path: String, message: String| out.push(Diagnostic { path, message });

    if scene.node_id.trim().is_empty() {
        report("node_id".into(), "must not be empty".into());
    }
    if !(scene.duration > 0.0 && scene.duration.is_finite()) {
        report("duration_s".into(), format!("must be positive, got {}", scene.duration));
    }
    if !(scene.fps > 0.0 && scene.fps.is_finite()) {
        report("fps".into(), format!("must be positive, got {}", scene.fps));
    }
    if scene.resolution.width == 0 || scene.resolution.height == 0 {
        report("resolution".into(), "width and height must be positive".into());
    }
    let origin = scene.camera_base.position;
    if origin.lat().abs() >= geo::POLE_GUARD_RAD {
        report("camera_base".into(), "camera is too close to a pole".into());
    }
    if !(scene.camera_base.height >= 0.0 && scene.camera_base.height.is_finite()) {
        report("camera_base.height_m".into(), "must be non-negative".into());
    }

    if scene.keyframes.is_empty() {
        report("keyframes".into(), "at least one keyframe at t = 0 is required".into());
    } else if scene.keyframes[0].time != 0.0 {
        report("keyframes[0]".into(), "first keyframe must be at t = 0".into());
    }
    for (i, k) in scene.keyframes.iter().enumerate() {
        let path = format!("keyframes[{i}]");
        if !(k.time >= 0.0 && k.time <= scene.duration) {
            report(path.clone(), format!("time {} is outside [0, {}]", k.time, scene.duration));
        }
        if i > 0 && k.time <= scene.keyframes[i - 1].time {
            report(path.clone(), "keyframes must be strictly increasing in time".into());
        }
        if !(k.horizontal_fov > 0.0 && k.horizontal_fov < PI) {
            report(path.clone(), "horizontal fov must be in (0, 180) degrees".into());
        }
        if k.pitch.is_nan() || k.pitch.abs() > FRAC_PI_2 {
            report(path.clone(), "pitch must be within [-90, 90] degrees".into());
        }
        if !k.heading.is_finite() {
            report(path, "heading must be finite".into());
        }
    }

    let mut seen = HashSet::new();
    for (i, actor) in scene.actors.iter().enumerate() {
        let path = format!("actors[{i}]");
        if !seen.insert(&actor.id) {
            report(path.clone(), format!("duplicate actor id {}", actor.id));
        }
        if !(actor.width > 0.0 && actor.width.is_finite()) || !(actor.height > 0.0 && actor.height.is_finite()) {
            report(path.clone(), "width and height must be positive".into());
        }
        if let Err(e) = enu_offset(actor.anchor, origin) {
            report(path.clone(), format!("anchor: {e}"));
        }
        let Some(traj) = &actor.trajectory else { continue };
        let tpath = format!("{path}.trajectory");
        if traj.sketch.len() < 2 {
            report(tpath.clone(), "needs at least two points".into());
        }
        if traj.sketch.windows(2).any(|w| w[0] == w[1]) {
            report(tpath.clone(), "consecutive points must be distinct".into());
        }
        if !(traj.start_time >= 0.0 && traj.start_time < traj.end_time && traj.end_time <= scene.duration) {
            report(
                tpath.clone(),
                format!(
                    "window [{}, {}] must satisfy 0 <= start < end <= {}",
                    traj.start_time, traj.end_time, scene.duration
                ),
            );
        }
        if traj.first() != Some(actor.anchor) {
            report(tpath.clone(), "must start at the actor's anchor".into());
        }
        for (j, p) in traj.sketch.iter().enumerate() {
            if let Err(e) = enu_offset(*p, origin) {
                report(format!("{tpath}.points[{j}]"), e.to_string());
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn origin() -> GeoPoint {
        GeoPoint::from_degrees(40.0100, -105.2700).unwrap()
    }

    fn at(east: f64, north: f64) -> GeoPoint {
        enu_to_geo(EnuOffset::new(east, north), origin()).unwrap()
    }

    fn scene(heading: f64, pitch: f64, hfov_deg: f64, height: f64) -> Scene {
        let cam = CameraPose::new(origin(), heading, pitch, hfov_deg.to_radians(), height, DEFAULT_VIEWPORT).unwrap();
        Scene::new("node", cam)
    }

    fn enu(p: GeoPoint) -> EnuOffset {
        enu_offset(p, origin()).unwrap()
    }

    #[test]
    fn straight_path_midpoint_and_hold() {
        let traj = Trajectory { sketch: vec![at(0.0, 0.0), at(0.0, 16.0)], start_time: 0.0, end_time: 4.0 };
        let mid = enu(resample_trajectory(&traj, 2.0, origin()).unwrap());
        assert!((mid.north - 8.0).abs() < 1e-6 && mid.east.abs() < 1e-6, "{mid:?}");
        assert_eq!(resample_trajectory(&traj, 5.0, origin()).unwrap(), traj.sketch[1]);
        assert_eq!(resample_trajectory(&traj, 4.0, origin()).unwrap(), traj.sketch[1]);
        assert_eq!(resample_trajectory(&traj, 0.0, origin()).unwrap(), traj.sketch[0]);
    }

    #[test]
    fn late_start_holds_at_first_point() {
        let traj = Trajectory { sketch: vec![at(1.0, 0.0), at(5.0, 0.0)], start_time: 1.0, end_time: 3.0 };
        assert_eq!(resample_trajectory(&traj, 0.5, origin()).unwrap(), traj.sketch[0]);
    }

    #[test]
    fn degenerate_sketch_is_rejected() {
        let p = at(3.0, 3.0);
        let traj = Trajectory { sketch: vec![p, p], start_time: 0.0, end_time: 1.0 };
        assert_eq!(resample_trajectory(&traj, 0.5, origin()), Err(StagingError::DegenerateSketch));
        let single = Trajectory { sketch: vec![p], start_time: 0.0, end_time: 1.0 };
        assert_eq!(resample_trajectory(&single, 0.5, origin()), Err(StagingError::DegenerateSketch));
    }

    #[test]
    fn single_keyframe_is_constant() {
        let s = scene(1.0, -0.1, 80.0, 2.5);
        let a = camera_at(&s, 0.0);
        for t in [0.7, 2.0, 4.99, 5.0] {
            assert_eq!(camera_at(&s, t), a);
        }
    }

    #[test]
    fn heading_takes_the_short_way_through_north() {
        let mut s = scene(350f64.to_radians(), 0.0, 80.0, 2.5);
        s.set_keyframe(CameraKeyframe { time: 2.0, heading: 10f64.to_radians(), pitch: 0.0, horizontal_fov: 80f64.to_radians() });
        let h = camera_at(&s, 1.0).heading;
        assert!(wrap_angle(h).abs() < 1e-12, "heading {h}");
    }

    #[test]
    fn fov_interpolates_linearly() {
        let mut s = scene(0.0, 0.0, 60.0, 2.5);
        s.set_keyframe(CameraKeyframe { time: 5.0, heading: 0.0, pitch: 0.0, horizontal_fov: 30f64.to_radians() });
        let fov = camera_at(&s, 2.5).horizontal_fov;
        assert!((fov - 45f64.to_radians()).abs() < 1e-12);
        let pose = camera_at(&s, 2.5);
        assert!(((pose.vertical_fov / 2.0).tan() - (fov / 2.0).tan() * 720.0 / 1280.0).abs() < 1e-12);
    }

    #[test]
    fn keyframes_are_exact_and_held_outside() {
        let mut s = scene(0.0, 0.0, 60.0, 2.5);
        let k = CameraKeyframe { time: 2.0, heading: 1.0, pitch: -0.2, horizontal_fov: 0.8 };
        s.set_keyframe(k);
        let p = camera_at(&s, 2.0);
        assert_eq!((p.heading, p.pitch, p.horizontal_fov), (1.0, -0.2, 0.8));
        assert_eq!(camera_at(&s, 4.0), p);
        // Replacing at the same time keeps one keyframe per time.
        s.set_keyframe(CameraKeyframe { heading: 2.0, ..k });
        assert_eq!(s.keyframes.len(), 2);
    }

    #[test]
    fn closed_form_card_pixels() {
        let mut s = scene(0.0, 0.0, 90.0, 2.5);
        s.actors.push(Actor::new("walker", at(0.0, 10.0)));
        let sample = sample_scene(&s, 0.0);
        let q = &sample.quads[0];
        let close = |a: f64, b: f64| assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        close(q.bottom, 520.0);
        close(q.top, 411.2);
        close(q.left, 620.8);
        close(q.right, 659.2);
        close(q.anchor_u, 640.0);
        assert_eq!(q.pixels, PixelRect { x0: 621, y0: 411, x1: 659, y1: 520 });
        assert_eq!(q.visibility, Visibility::OnScreen);
    }

    #[test]
    fn actor_behind_camera_is_omitted() {
        let mut s = scene(0.0, 0.0, 90.0, 2.5);
        s.actors.push(Actor::new("back", at(0.0, -10.0)));
        s.actors.push(Actor::new("front", at(0.0, 10.0)));
        let sample = sample_scene(&s, 0.0);
        assert_eq!(sample.quads.len(), 1);
        assert_eq!(sample.quads[0].actor_id, ActorId::from("front"));
    }

    #[test]
    fn off_screen_card_is_clipped() {
        let mut s = scene(0.0, 0.0, 60.0, 2.5);
        // 50 degrees to the right with a 60 degree fov: anchor is off screen.
        let a = 50f64.to_radians();
        s.actors.push(Actor::new("side", at(10.0 * a.sin(), 10.0 * a.cos())));
        let q = &sample_scene(&s, 0.0).quads[0];
        assert_eq!(q.visibility, Visibility::OffScreen);
        assert!(q.pixels.x1 <= 1280 && q.pixels.is_empty());
    }

    #[test]
    fn failures_do_not_drop_other_actors() {
        let mut s = scene(0.0, 0.0, 90.0, 2.5);
        s.actors.push(Actor::new("far", GeoPoint::from_degrees(40.3, -105.27).unwrap()));
        s.actors.push(Actor::new("near", at(0.0, 10.0)));
        let sample = sample_scene(&s, 0.0);
        assert_eq!(sample.quads.len(), 1);
        assert_eq!(sample.failures.len(), 1);
        assert_eq!(sample.failures[0].actor_id, ActorId::from("far"));
    }

    #[test]
    fn crossing_the_optical_axis() {
        // Walks east along north = 10 from x = -5 to x = 5 over [0, 4]; the
        // bearing equals the heading (north) at t = 2.
        let mut s = scene(0.0, 0.0, 90.0, 2.5);
        let traj = Trajectory { sketch: vec![at(-5.0, 10.0), at(5.0, 10.0)], start_time: 0.0, end_time: 4.0 };
        s.actors.push(Actor::new("crosser", traj.sketch[0]).with_trajectory(traj));
        let u_at = |t: f64| sample_scene(&s, t).quads[0].center_u();
        assert!((u_at(2.0) - 640.0).abs() < 1e-6);
        assert!(u_at(1.9) < 640.0 && u_at(2.1) > 640.0);
    }

    #[test]
    fn validation_catches_problems() {
        let mut s = scene(0.0, 0.0, 90.0, 2.5);
        s.actors.push(Actor::new("a", at(0.0, 10.0)));
        assert!(validate_scene(&s).is_empty(), "{:?}", validate_scene(&s));

        let mut late = s.clone();
        let traj = Trajectory { sketch: vec![at(0.0, 10.0), at(3.0, 10.0)], start_time: 0.0, end_time: 6.0 };
        late.actors[0] = Actor::new("a", at(0.0, 10.0)).with_trajectory(traj);
        let d = validate_scene(&late);
        assert_eq!(d.len(), 1, "{d:?}");
        assert_eq!(d[0].path, "actors[0].trajectory");

        let mut far = s.clone();
        far.actors[0].anchor = enu_to_geo(EnuOffset::new(0.0, 20_000.0), origin()).unwrap();
        assert_eq!(validate_scene(&far).len(), 1);

        let mut no_keys = s.clone();
        no_keys.keyframes.clear();
        assert_eq!(validate_scene(&no_keys).len(), 1);

        let mut dup = s.clone();
        dup.actors.push(Actor::new("a", at(1.0, 10.0)));
        assert_eq!(validate_scene(&dup).len(), 1);
    }

    #[test]
    fn frame_count_and_times() {
        let s = scene(0.0, 0.0, 90.0, 2.5);
        assert_eq!(s.frame_count(), 80);
        assert_eq!(s.frame_time(16), 1.0);
    }
}
