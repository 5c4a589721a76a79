//! Core of the street-view scene stager: geodetic placement of actors,
//! panorama view synthesis, the staged timeline and the frame sequences handed
//! to a video-inpainting backend.

pub mod frames;
pub mod geo;
pub mod panorama;
pub mod render;
pub mod scene_file;
pub mod staging;

pub use frames::{ChannelLayout, FrameManifest, FrameSequence, FrameSequenceRef, RgbSequence, RgbaSequence};
pub use geo::{CameraPose, GeoError, GeoPoint, ScreenPoint, Viewport, Visibility};
pub use panorama::{Panorama, PanoramaError, ViewDirection};
pub use scene_file::{parse_scene, scene_to_json, SceneDoc, SceneFileError};
pub use staging::{
    camera_at, sample_scene, validate_scene, Actor, ActorId, CameraKeyframe, Diagnostic, Scene, SceneSample,
    ScreenQuad, Trajectory,
};
