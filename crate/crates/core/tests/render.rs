use std::f64::consts::PI;

use image::{Rgb, RgbImage, Rgba, RgbaImage};

use streetstage_core::geo::{CameraPose, GeoPoint, Viewport};
use streetstage_core::render::{compose_preview, render_background, render_masks, MASK_GREEN};
use streetstage_core::staging::DEFAULT_VIEWPORT;
use streetstage_core::{
    sample_scene, Actor, CameraKeyframe, FrameSequenceRef, Panorama, RgbSequence, RgbaSequence, Scene, Trajectory,
};
use streetstage_oracles::{bilinear, direction_pattern, equirect_position, pixel_direction, OracleCamera, SPHERE_RADIUS_M};

const LAT0: f64 = 0.8527;
const LON0: f64 = 0.0400;

fn origin() -> GeoPoint {
    GeoPoint::new(LAT0, LON0).unwrap()
}

fn at(east: f64, north: f64) -> GeoPoint {
    GeoPoint::new(LAT0 + north / SPHERE_RADIUS_M, LON0 + east / (SPHERE_RADIUS_M * LAT0.cos())).unwrap()
}

fn pattern_pano(width: u32) -> Panorama {
    let height = width / 2;
    Panorama::new(RgbImage::from_fn(width, height, |x, y| Rgb(direction_pattern(x, y, width, height))), 0.0).unwrap()
}

fn base_scene(heading: f64) -> Scene {
    Scene::new("node", CameraPose::new(origin(), heading, 0.0, 1.4, 2.5, DEFAULT_VIEWPORT).unwrap())
}

fn staged_scene() -> Scene {
    let mut scene = base_scene(0.2);
    scene.set_keyframe(CameraKeyframe { time: 5.0, heading: 0.9, pitch: -0.1, horizontal_fov: 1.0 });
    scene.actors.push(Actor::new("still", at(3.0, 14.0)));
    let walk = Trajectory { sketch: vec![at(-5.0, 12.0), at(8.0, 18.0)], start_time: 0.5, end_time: 4.0 };
    scene.actors.push(Actor::new("walker", at(-5.0, 12.0)).with_trajectory(walk));
    scene
}

#[test]
fn default_timeline_gives_eighty_frames_at_hd() {
    let scene = staged_scene();
    let bg = render_background(&scene, &pattern_pano(1024)).unwrap();
    assert_eq!(bg.len(), 80);
    assert_eq!(bg.fps(), 16.0);
    assert_eq!(bg.resolution(), Viewport::new(1280, 720));
    let masks = render_masks(&scene).unwrap();
    assert_eq!(masks.len(), 2);
    for (_, m) in &masks {
        assert_eq!(m.len(), 80);
        assert!(m.frames().iter().all(|f| f.dimensions() == (1280, 720)));
    }
}

#[test]
fn mask_frames_have_two_pixel_classes_and_match_samples() {
    let scene = staged_scene();
    let masks = render_masks(&scene).unwrap();
    for (id, seq) in &masks {
        for (k, frame) in seq.frames().iter().enumerate() {
            let sample = sample_scene(&scene, k as f64 / 16.0);
            let rect = sample.quads.iter().find(|q| &q.actor_id == id).map(|q| q.pixels);
            for (x, y, p) in frame.enumerate_pixels() {
                let inside = rect.is_some_and(|r| r.contains(x, y));
                if inside {
                    assert_eq!(p.0, [0, 255, 0, 255], "{id} frame {k} ({x}, {y})");
                } else {
                    assert_eq!(p.0[3], 0, "{id} frame {k} ({x}, {y})");
                }
            }
        }
    }
}

#[test]
fn static_camera_gives_identical_frames() {
    let mut scene = base_scene(2.0);
    scene.actors.push(Actor::new("still", at(-14.0, -10.0)));
    let bg = render_background(&scene, &pattern_pano(512)).unwrap();
    assert!(bg.frames().iter().all(|f| f == &bg.frames()[0]));
    let masks = render_masks(&scene).unwrap();
    assert!(masks[0].1.frames().iter().all(|f| f == &masks[0].1.frames()[0]));
}

#[test]
fn pan_centre_pixel_matches_analytic_sample() {
    let (pw, ph) = (1024, 512);
    let pano = pattern_pano(pw);
    let mut scene = base_scene(5.9);
    scene.set_keyframe(CameraKeyframe { time: 5.0, heading: 1.1, pitch: 0.0, horizontal_fov: 1.4 });
    let bg = render_background(&scene, &pano).unwrap();
    // 5.9 -> 1.1 rad is shorter going forward through north.
    let delta = 1.1 + 2.0 * PI - 5.9;
    for (k, frame) in bg.frames().iter().enumerate() {
        let cam = OracleCamera {
            lat: LAT0,
            lon: LON0,
            heading: 5.9 + delta * (k as f64 / 16.0) / 5.0,
            pitch: 0.0,
            hfov: 1.4,
            height: 2.5,
            width_px: 1280.0,
            height_px: 720.0,
        };
        let (yaw, pitch) = pixel_direction(&cam, 640, 360);
        let (u, v) = equirect_position(yaw, pitch, 0.0, pw, ph);
        let expected = bilinear(|a, b| direction_pattern(a, b, pw, ph), pw, ph, u, v);
        let got = frame.get_pixel(640, 360).0;
        for c in 0..3 {
            assert!((f64::from(got[c]) - expected[c]).abs() <= 1.0, "frame {k}: {got:?} vs {expected:?}");
        }
    }
}

#[test]
fn actor_behind_camera_gives_transparent_frames() {
    let mut scene = base_scene(0.0);
    scene.actors.push(Actor::new("behind", at(0.5, -12.0)));
    let masks = render_masks(&scene).unwrap();
    assert_eq!(masks[0].1.len(), 80);
    assert!(masks[0].1.frames().iter().all(|f| f.pixels().all(|p| p.0[3] == 0)));
}

#[test]
fn following_pan_keeps_actor_centred() {
    // Keyframes at every frame time track the walker's analytic bearing.
    let (start, end) = ((-20.0, 15.0), (18.0, 25.0));
    let mut scene = base_scene(0.0);
    let traj = Trajectory { sketch: vec![at(start.0, start.1), at(end.0, end.1)], start_time: 0.0, end_time: 5.0 };
    scene.actors.push(Actor::new("walker", at(start.0, start.1)).with_trajectory(traj));
    scene.keyframes.clear();
    for k in 0..80 {
        let t = k as f64 / 16.0;
        let f = t / 5.0;
        let e = start.0 + (end.0 - start.0) * f;
        let n = start.1 + (end.1 - start.1) * f;
        let bearing = e.atan2(n).rem_euclid(2.0 * PI);
        scene.keyframes.push(CameraKeyframe { time: t, heading: bearing, pitch: 0.0, horizontal_fov: 1.4 });
    }
    for k in 0..80 {
        let q = &sample_scene(&scene, k as f64 / 16.0).quads[0];
        assert!((q.center_u() - 640.0).abs() < 1.0, "frame {k}: u = {}", q.center_u());
    }
    let masks = render_masks(&scene).unwrap();
    for frame in masks[0].1.frames() {
        let xs: Vec<u32> = frame.enumerate_pixels().filter(|(_, _, p)| p.0[3] == 255).map(|(x, _, _)| x).collect();
        let mid = (f64::from(*xs.iter().min().unwrap()) + f64::from(*xs.iter().max().unwrap()) + 1.0) / 2.0;
        assert!((mid - 640.0).abs() <= 1.0, "painted centre {mid}");
    }
}

#[test]
fn rendering_is_deterministic() {
    let scene = staged_scene();
    let pano = pattern_pano(512);
    let a = render_background(&scene, &pano).unwrap();
    let b = render_background(&scene, &pano).unwrap();
    assert!(a.frames() == b.frames());
    let ma = render_masks(&scene).unwrap();
    let mb = render_masks(&scene).unwrap();
    assert!(ma.iter().zip(&mb).all(|(x, y)| x.0 == y.0 && x.1.frames() == y.1.frames()));
}

#[test]
fn written_sequences_reload_identically() {
    let scene = staged_scene();
    let dir = tempfile::tempdir().unwrap();
    let masks = render_masks(&scene).unwrap();
    let written = masks[1].1.write_dir(dir.path()).unwrap();
    assert_eq!(written.manifest.count, 80);
    let reopened = FrameSequenceRef::open(dir.path()).unwrap();
    let loaded: RgbaSequence = reopened.load().unwrap();
    assert!(loaded.frames() == masks[1].1.frames());
}

fn flat(color: [u8; 3], n: usize) -> RgbSequence {
    let vp = Viewport::new(16, 8);
    RgbSequence::new(vec![RgbImage::from_pixel(16, 8, Rgb(color)); n], 16.0, vp).unwrap()
}

fn alpha(color: [u8; 4], n: usize) -> RgbaSequence {
    let vp = Viewport::new(16, 8);
    RgbaSequence::new(vec![RgbaImage::from_pixel(16, 8, Rgba(color)); n], 16.0, vp).unwrap()
}

#[test]
fn compose_preview_cases() {
    let bg = flat([10, 20, 30], 4);
    assert!(compose_preview(&bg, &[]).unwrap().frames() == bg.frames());
    assert!(compose_preview(&bg, &[alpha([9, 9, 9, 0], 4)]).unwrap().frames() == bg.frames());
    let green = [MASK_GREEN[0], MASK_GREEN[1], MASK_GREEN[2], 255];
    let out = compose_preview(&bg, &[alpha(green, 4)]).unwrap();
    assert!(out.frames().iter().all(|f| f.pixels().all(|p| p.0 == MASK_GREEN)));
    assert!(compose_preview(&bg, &[alpha(green, 3)]).is_err());
}
