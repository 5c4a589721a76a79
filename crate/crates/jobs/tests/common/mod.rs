#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use streetstage_core::{parse_scene, Panorama, Scene, Viewport};
use streetstage_jobs::{stage_default_bundle, JobBundle};

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn demo_scene() -> Scene {
    parse_scene(&std::fs::read_to_string(fixtures().join("scenes/demo.json")).unwrap()).unwrap()
}

/// The demo scene shrunk to `frames` frames at 160x90, for tests that care
/// about timing or bookkeeping rather than pixels.
pub fn small_scene(frames: usize) -> Scene {
    let mut scene = demo_scene();
    scene.resolution = Viewport::new(160, 90);
    scene.fps = frames as f64 / scene.duration;
    scene
}

pub fn pano() -> &'static Panorama {
    static PANO: OnceLock<Panorama> = OnceLock::new();
    PANO.get_or_init(|| Panorama::decode(&std::fs::read(fixtures().join("imagery/pano-a.png")).unwrap(), 0.0).unwrap())
}

pub fn staged(scene: &Scene, dir: &Path) -> JobBundle {
    stage_default_bundle(scene, pano(), dir).unwrap()
}

/// A small bundle whose content (and so id) depends on `tag`.
pub fn tagged_bundle(tag: &str, dir: &Path) -> JobBundle {
    let mut scene = small_scene(4);
    scene.scene_prompt = format!("{} ({tag})", scene.scene_prompt);
    staged(&scene, &dir.join(tag))
}
