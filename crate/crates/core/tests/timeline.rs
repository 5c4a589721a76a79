use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use streetstage_core::geo::{CameraPose, GeoPoint};
use streetstage_core::staging::{resample_trajectory, DEFAULT_VIEWPORT};
use streetstage_core::{camera_at, sample_scene, Actor, CameraKeyframe, Scene, Trajectory};
use streetstage_oracles::{angle_diff, dense_arc_point, tangent_plane, SPHERE_RADIUS_M};

const LAT0: f64 = 0.6983;
const LON0: f64 = -1.8373;

fn origin() -> GeoPoint {
    GeoPoint::new(LAT0, LON0).unwrap()
}

fn at(east: f64, north: f64) -> GeoPoint {
    GeoPoint::new(LAT0 + north / SPHERE_RADIUS_M, LON0 + east / (SPHERE_RADIUS_M * LAT0.cos())).unwrap()
}

fn local(p: GeoPoint) -> (f64, f64) {
    tangent_plane(LAT0, LON0, p.lat(), p.lon())
}

#[test]
fn polyline_matches_dense_arc_length_oracle() {
    let pts = [(0.0, 5.0), (12.0, 9.0), (15.0, 30.0), (-4.0, 41.0), (-20.0, 38.5)];
    let traj = Trajectory { sketch: pts.iter().map(|&(e, n)| at(e, n)).collect(), start_time: 0.5, end_time: 4.5 };
    // Oracle polyline uses the exact tangent-plane positions of the stored points.
    let stored: Vec<(f64, f64)> = traj.sketch.iter().map(|p| local(*p)).collect();
    let mut worst: f64 = 0.0;
    for i in 0..20 {
        let t = 0.5 + 4.0 * f64::from(i) / 19.0;
        let (e, n) = local(resample_trajectory(&traj, t, origin()).unwrap());
        let (oe, on) = dense_arc_point(&stored, (t - 0.5) / 4.0, 100_000);
        worst = worst.max((e - oe).hypot(n - on));
    }
    assert!(worst < 0.01, "worst deviation {worst} m");
}

#[test]
fn straight_line_steps_are_constant() {
    let traj = Trajectory { sketch: vec![at(-30.0, 10.0), at(25.0, 60.0)], start_time: 0.0, end_time: 5.0 };
    let positions: Vec<(f64, f64)> =
        (0..=80).map(|k| local(resample_trajectory(&traj, f64::from(k) / 16.0, origin()).unwrap())).collect();
    let steps: Vec<f64> = positions.windows(2).map(|w| (w[1].0 - w[0].0).hypot(w[1].1 - w[0].1)).collect();
    let mean = steps.iter().sum::<f64>() / steps.len() as f64;
    let var = steps.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / steps.len() as f64;
    assert!(var / (mean * mean) < 1e-9, "relative variance {}", var / (mean * mean));
}

#[test]
fn endpoints_are_preserved_exactly() {
    let traj = Trajectory { sketch: vec![at(1.0, 2.0), at(7.0, 3.0), at(9.0, -4.0)], start_time: 1.25, end_time: 3.5 };
    assert_eq!(resample_trajectory(&traj, 1.25, origin()).unwrap(), traj.sketch[0]);
    assert_eq!(resample_trajectory(&traj, 3.5, origin()).unwrap(), traj.sketch[2]);
}

fn keyed_scene() -> Scene {
    let cam = CameraPose::new(origin(), 0.3, 0.0, 1.2, 2.5, DEFAULT_VIEWPORT).unwrap();
    let mut scene = Scene::new("node", cam);
    for (t, h, p, f) in [(0.0, 0.3, 0.0, 1.2), (1.5, 6.0, -0.2, 0.9), (3.0, 1.0, 0.1, 1.6), (4.5, 2.5, 0.0, 0.5)] {
        scene.set_keyframe(CameraKeyframe { time: t, heading: h, pitch: p, horizontal_fov: f });
    }
    scene
}

#[test]
fn camera_is_exact_at_keyframes_and_continuous_between() {
    let scene = keyed_scene();
    for k in &scene.keyframes {
        let c = camera_at(&scene, k.time);
        assert_eq!((c.heading, c.pitch, c.horizontal_fov), (k.heading, k.pitch, k.horizontal_fov));
    }
    let eps = 1e-7;
    let mut t: f64 = 0.0;
    while t <= 5.0 {
        let a = camera_at(&scene, t - eps);
        let b = camera_at(&scene, t + eps);
        assert!(angle_diff(a.heading, b.heading).abs() < 1e-5, "heading jump at {t}");
        assert!((a.pitch - b.pitch).abs() < 1e-5, "pitch jump at {t}");
        assert!((a.horizontal_fov - b.horizontal_fov).abs() < 1e-5, "fov jump at {t}");
        assert!((a.vertical_fov - b.vertical_fov).abs() < 1e-5, "vfov jump at {t}");
        t += 0.01;
    }
}

#[test]
fn shortest_arc_through_north() {
    let cam = CameraPose::new(origin(), 350f64.to_radians(), 0.0, 1.2, 2.5, DEFAULT_VIEWPORT).unwrap();
    let mut scene = Scene::new("node", cam);
    scene.set_keyframe(CameraKeyframe { time: 2.0, heading: 10f64.to_radians(), pitch: 0.0, horizontal_fov: 1.2 });
    let h = camera_at(&scene, 1.0).heading;
    assert!(angle_diff(h, 0.0).abs() < 1e-12, "{h}");
}

#[test]
fn sampling_ignores_actor_order() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut scene = keyed_scene();
    for i in 0..12 {
        let e = rng.random_range(-60.0..60.0);
        let n = rng.random_range(-60.0..60.0);
        let mut actor = Actor::new(format!("a{i}"), at(e, n));
        if i % 2 == 0 {
            let end = at(e + rng.random_range(-10.0..10.0), n + rng.random_range(-10.0..10.0));
            actor = actor.with_trajectory(Trajectory { sketch: vec![at(e, n), end], start_time: 0.0, end_time: 4.0 });
        }
        scene.actors.push(actor);
    }
    let mut shuffled = scene.clone();
    shuffled.actors.shuffle(&mut rng);
    for t in [0.0, 1.3, 2.9, 5.0] {
        let mut a = sample_scene(&scene, t).quads;
        let mut b = sample_scene(&shuffled, t).quads;
        a.sort_by(|x, y| x.actor_id.0.cmp(&y.actor_id.0));
        b.sort_by(|x, y| x.actor_id.0.cmp(&y.actor_id.0));
        assert_eq!(a, b);
    }
}

#[test]
fn crossing_time_puts_card_centre_on_axis() {
    // Camera looks north; the actor walks west to east 20 m ahead, crossing the
    // axis at t = 1.5 s where its east offset is zero.
    let cam = CameraPose::new(origin(), 0.0, 0.0, PI / 2.0, 2.5, DEFAULT_VIEWPORT).unwrap();
    let mut scene = Scene::new("node", cam);
    let traj = Trajectory { sketch: vec![at(-6.0, 20.0), at(10.0, 20.0)], start_time: 0.0, end_time: 4.0 };
    scene.actors.push(Actor::new("walker", at(-6.0, 20.0)).with_trajectory(traj));
    let u = |t: f64| sample_scene(&scene, t).quads[0].center_u();
    assert!((u(1.5) - 640.0).abs() < 1e-6, "{}", u(1.5));
    assert!(u(1.49) < 640.0 && u(1.51) > 640.0);
}
