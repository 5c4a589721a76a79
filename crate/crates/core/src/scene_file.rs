//! JSON scene documents. Angles are degrees and distances meters on disk.
//!
//! ```json
//! {
//!   "schema_version": 1,
//!   "node_id": "fixture-pano-001",
//!   "camera_base": { "lat_deg": 40.01, "lon_deg": -105.27, "heading_deg": 0,
//!                    "pitch_deg": 0, "hfov_deg": 90, "height_m": 2.5 },
//!   "keyframes": [ { "t_s": 0, "heading_deg": 0, "pitch_deg": 0, "hfov_deg": 90 } ],
//!   "actors": [ { "id": "walker", "lat_deg": 40.0101, "lon_deg": -105.27,
//!                 "width_m": 0.6, "height_m": 1.7, "prompt": "a cyclist",
//!                 "trajectory": { "points": [[40.0101, -105.27], [40.0101, -105.2699]],
//!                                 "start_s": 0, "end_s": 4 } } ],
//!   "duration_s": 5, "fps": 16, "resolution": [1280, 720],
//!   "scene_prompt": "a sunny afternoon"
//! }
//! ```

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::{CameraPose, GeoError, GeoPoint, Viewport};
use crate::staging::{
    Actor, ActorId, CameraKeyframe, Scene, Trajectory, DEFAULT_ACTOR_HEIGHT_M, DEFAULT_ACTOR_WIDTH_M,
    DEFAULT_CAMERA_HEIGHT_M, DEFAULT_DURATION_S, DEFAULT_FPS, DEFAULT_VIEWPORT,
};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum SceneFileError {
    #[error("malformed scene document: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("unsupported schema_version {0} (expected {SCHEMA_VERSION})")]
    UnsupportedVersion(u32),
    #[error("{path}: {source}")]
    Coordinate { path: String, source: GeoError },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraBaseDoc {
    pub lat_deg: f64,
    pub lon_deg: f64,
    #[serde(default)]
    pub heading_deg: f64,
    #[serde(default)]
    pub pitch_deg: f64,
    pub hfov_deg: f64,
    #[serde(default = "default_camera_height")]
    pub height_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KeyframeDoc {
    pub t_s: f64,
    pub heading_deg: f64,
    #[serde(default)]
    pub pitch_deg: f64,
    pub hfov_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryDoc {
    /// `[lat_deg, lon_deg]` pairs.
    pub points: Vec<[f64; 2]>,
    pub start_s: f64,
    pub end_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActorDoc {
    pub id: String,
    pub lat_deg: f64,
    pub lon_deg: f64,
    #[serde(default = "default_actor_width")]
    pub width_m: f64,
    #[serde(default = "default_actor_height")]
    pub height_m: f64,
    #[serde(default)]
    pub prompt: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_image: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trajectory: Option<TrajectoryDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneDoc {
    pub schema_version: u32,
    pub node_id: String,
    pub camera_base: CameraBaseDoc,
    #[serde(default)]
    pub keyframes: Vec<KeyframeDoc>,
    #[serde(default)]
    pub actors: Vec<ActorDoc>,
    #[serde(default = "default_duration")]
    pub duration_s: f64,
    #[serde(default = "default_fps")]
    pub fps: f64,
    #[serde(default = "default_resolution")]
    pub resolution: [u32; 2],
    #[serde(default)]
    pub scene_prompt: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub sampling: BTreeMap<String, serde_json::Value>,
}

fn default_camera_height() -> f64 {
    DEFAULT_CAMERA_HEIGHT_M
}
fn default_actor_width() -> f64 {
    DEFAULT_ACTOR_WIDTH_M
}
fn default_actor_height() -> f64 {
    DEFAULT_ACTOR_HEIGHT_M
}
fn default_duration() -> f64 {
    DEFAULT_DURATION_S
}
fn default_fps() -> f64 {
    DEFAULT_FPS
}
fn default_resolution() -> [u32; 2] {
    [DEFAULT_VIEWPORT.width, DEFAULT_VIEWPORT.height]
}

impl ActorDoc {
    /// `path` prefixes coordinate errors, e.g. `actors[2]`.
    pub fn into_actor(self, path: &str) -> Result<Actor, SceneFileError> {
        let anchor = point(path, self.lat_deg, self.lon_deg)?;
        let trajectory = self
            .trajectory
            .map(|t| {
                let sketch = t
                    .points
                    .iter()
                    .enumerate()
                    .map(|(j, p)| point(format!("{path}.trajectory.points[{j}]"), p[0], p[1]))
                    .collect::<Result<Vec<_>, _>>()?;
                Ok::<_, SceneFileError>(Trajectory { sketch, start_time: t.start_s, end_time: t.end_s })
            })
            .transpose()?;
        Ok(Actor {
            id: ActorId(self.id),
            anchor,
            width: self.width_m,
            height: self.height_m,
            trajectory,
            prompt: self.prompt,
            reference_image: self.reference_image,
        })
    }
}

fn point(path: impl Into<String>, lat_deg: f64, lon_deg: f64) -> Result<GeoPoint, SceneFileError> {
    GeoPoint::from_degrees(lat_deg, lon_deg).map_err(|source| SceneFileError::Coordinate { path: path.into(), source })
}

impl SceneDoc {
    /// Converts to the radian-based scene. Structural problems (ordering,
    /// ranges, timing) are left for `validate_scene` to report.
    pub fn into_scene(self) -> Result<Scene, SceneFileError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(SceneFileError::UnsupportedVersion(self.schema_version));
        }
        let viewport = Viewport::new(self.resolution[0], self.resolution[1]);
        let cb = &self.camera_base;
        let position = point("camera_base", cb.lat_deg, cb.lon_deg)?;
        // Built field-by-field so out-of-range values reach validation instead
        // of failing the parse.
        let camera_base = CameraPose {
            position,
            heading: crate::geo::normalize_heading(cb.heading_deg.to_radians()),
            pitch: cb.pitch_deg.to_radians(),
            horizontal_fov: cb.hfov_deg.to_radians(),
            vertical_fov: crate::geo::vertical_fov_for(cb.hfov_deg.to_radians(), viewport),
            height: cb.height_m,
        };
        let keyframes = if self.keyframes.is_empty() {
            vec![CameraKeyframe {
                time: 0.0,
                heading: camera_base.heading,
                pitch: camera_base.pitch,
                horizontal_fov: camera_base.horizontal_fov,
            }]
        } else {
            self.keyframes
                .iter()
                .map(|k| CameraKeyframe {
                    time: k.t_s,
                    heading: crate::geo::normalize_heading(k.heading_deg.to_radians()),
                    pitch: k.pitch_deg.to_radians(),
                    horizontal_fov: k.hfov_deg.to_radians(),
                })
                .collect()
        };
        let actors = self
            .actors
            .into_iter()
            .enumerate()
            .map(|(i, a)| a.into_actor(&format!("actors[{i}]")))
            .collect::<Result<Vec<_>, SceneFileError>>()?;
        Ok(Scene {
            node_id: self.node_id,
            camera_base,
            keyframes,
            actors,
            duration: self.duration_s,
            fps: self.fps,
            resolution: viewport,
            scene_prompt: self.scene_prompt,
            sampling: self.sampling,
        })
    }

    pub fn from_scene(scene: &Scene) -> Self {
        let cb = &scene.camera_base;
        SceneDoc {
            schema_version: SCHEMA_VERSION,
            node_id: scene.node_id.clone(),
            camera_base: CameraBaseDoc {
                lat_deg: cb.position.lat_deg(),
                lon_deg: cb.position.lon_deg(),
                heading_deg: cb.heading.to_degrees(),
                pitch_deg: cb.pitch.to_degrees(),
                hfov_deg: cb.horizontal_fov.to_degrees(),
                height_m: cb.height,
            },
            keyframes: scene
                .keyframes
                .iter()
                .map(|k| KeyframeDoc {
                    t_s: k.time,
                    heading_deg: k.heading.to_degrees(),
                    pitch_deg: k.pitch.to_degrees(),
                    hfov_deg: k.horizontal_fov.to_degrees(),
                })
                .collect(),
            actors: scene
                .actors
                .iter()
                .map(|a| ActorDoc {
                    id: a.id.0.clone(),
                    lat_deg: a.anchor.lat_deg(),
                    lon_deg: a.anchor.lon_deg(),
                    width_m: a.width,
                    height_m: a.height,
                    prompt: a.prompt.clone(),
                    reference_image: a.reference_image.clone(),
                    trajectory: a.trajectory.as_ref().map(|t| TrajectoryDoc {
                        points: t.sketch.iter().map(|p| [p.lat_deg(), p.lon_deg()]).collect(),
                        start_s: t.start_time,
                        end_s: t.end_time,
                    }),
                })
                .collect(),
            duration_s: scene.duration,
            fps: scene.fps,
            resolution: [scene.resolution.width, scene.resolution.height],
            scene_prompt: scene.scene_prompt.clone(),
            sampling: scene.sampling.clone(),
        }
    }
}

pub fn parse_scene(text: &str) -> Result<Scene, SceneFileError> {
    serde_json::from_str::<SceneDoc>(text)?.into_scene()
}

pub fn scene_to_json(scene: &Scene) -> String {
    serde_json::to_string_pretty(&SceneDoc::from_scene(scene)).expect("scene document serializes")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::staging::validate_scene;

    const DOC: &str = r#"{
        "schema_version": 1,
        "node_id": "n1",
        "camera_base": { "lat_deg": 40.01, "lon_deg": -105.27, "heading_deg": 30, "hfov_deg": 90 },
        "actors": [ { "id": "a", "lat_deg": 40.0101, "lon_deg": -105.27, "prompt": "a dog",
                      "trajectory": { "points": [[40.0101, -105.27], [40.0101, -105.2699]], "start_s": 0, "end_s": 4 } } ],
        "scene_prompt": "sunset"
    }"#;

    #[test]
    fn defaults_fill_in() {
        let s = parse_scene(DOC).unwrap();
        assert_eq!(s.duration, 5.0);
        assert_eq!(s.fps, 16.0);
        assert_eq!(s.resolution, Viewport::new(1280, 720));
        assert_eq!(s.camera_base.height, 2.5);
        assert_eq!(s.keyframes.len(), 1);
        assert!((s.keyframes[0].heading - 30f64.to_radians()).abs() < 1e-15);
        assert_eq!(s.actors[0].width, 0.6);
        assert_eq!(s.actors[0].height, 1.7);
        assert!(validate_scene(&s).is_empty(), "{:?}", validate_scene(&s));
    }

    #[test]
    fn version_is_mandatory_and_checked() {
        let missing = DOC.replace("\"schema_version\": 1,", "");
        assert!(matches!(parse_scene(&missing), Err(SceneFileError::Parse(_))));
        let wrong = DOC.replace("\"schema_version\": 1", "\"schema_version\": 7");
        assert!(matches!(parse_scene(&wrong), Err(SceneFileError::UnsupportedVersion(7))));
    }

    #[test]
    fn bad_latitude_names_its_path() {
        let bad = DOC.replace("\"lat_deg\": 40.0101, \"lon_deg\": -105.27, \"prompt\"", "\"lat_deg\": 95, \"lon_deg\": -105.27, \"prompt\"");
        match parse_scene(&bad) {
            Err(SceneFileError::Coordinate { path, .. }) => assert_eq!(path, "actors[0]"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn reserialized_scene_parses_to_same_geometry() {
        let s = parse_scene(DOC).unwrap();
        let again = parse_scene(&scene_to_json(&s)).unwrap();
        assert_eq!(again.actors.len(), 1);
        assert!((again.actors[0].anchor.lat() - s.actors[0].anchor.lat()).abs() < 1e-15);
        assert!((again.keyframes[0].heading - s.keyframes[0].heading).abs() < 1e-15);
    }
}
