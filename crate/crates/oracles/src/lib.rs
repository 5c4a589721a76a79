//! Reference computations for tests. Nothing here calls into the production
//! crates; inputs and outputs are plain numbers in degrees, radians and meters.

use std::f64::consts::{FRAC_PI_2, PI};

use rand::Rng;

pub const SPHERE_RADIUS_M: f64 = 6_371_008.8;

type Vec3 = [f64; 3];

fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

/// Earth-centred coordinates of a point `radius` meters from the centre.
pub fn ecef(lat: f64, lon: f64, radius: f64) -> Vec3 {
    [radius * lat.cos() * lon.cos(), radius * lat.cos() * lon.sin(), radius * lat.sin()]
}

/// Exact east/north/up components of `target - origin` at the origin's tangent plane.
pub fn local_vector(origin_lat: f64, origin_lon: f64, target: Vec3, origin: Vec3) -> Vec3 {
    let d = sub(target, origin);
    let (sp, cp, sl, cl) = (origin_lat.sin(), origin_lat.cos(), origin_lon.sin(), origin_lon.cos());
    let east = [-sl, cl, 0.0];
    let north = [-sp * cl, -sp * sl, cp];
    let up = [cp * cl, cp * sl, sp];
    [dot(d, east), dot(d, north), dot(d, up)]
}

/// Great-circle destination from `(lat, lon)` after `distance` meters on `bearing`.
pub fn destination(lat: f64, lon: f64, bearing: f64, distance: f64) -> (f64, f64) {
    let delta = distance / SPHERE_RADIUS_M;
    let lat2 = (lat.sin() * delta.cos() + lat.cos() * delta.sin() * bearing.cos()).asin();
    let lon2 = lon + (bearing.sin() * delta.sin() * lat.cos()).atan2(delta.cos() - lat.sin() * lat2.sin());
    (lat2, lon2)
}

/// Haversine distance and initial bearing between two points on the sphere.
pub fn haversine(lat1: f64, lon1: f64, lat2: f64, lon2: f64) -> (f64, f64) {
    let dlat = lat2 - lat1;
    let dlon = lon2 - lon1;
    let a = (dlat / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * (dlon / 2.0).sin().powi(2);
    let d = 2.0 * SPHERE_RADIUS_M * a.sqrt().asin();
    let b = (dlon.sin() * lat2.cos()).atan2(lat1.cos() * lat2.sin() - lat1.sin() * lat2.cos() * dlon.cos());
    (d, b)
}

#[derive(Debug, Clone, Copy)]
pub struct OracleCamera {
    pub lat: f64,
    pub lon: f64,
    pub heading: f64,
    pub pitch: f64,
    pub hfov: f64,
    pub height: f64,
    pub width_px: f64,
    pub height_px: f64,
}

impl OracleCamera {
    pub fn tan_half_v(&self) -> f64 {
        (self.hfov / 2.0).tan() * self.height_px / self.width_px
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OracleProjection {
    Pixel { azimuth: f64, elevation: f64, u: f64, v: f64 },
    Behind { azimuth: f64, elevation: f64 },
}

impl OracleProjection {
    pub fn angles(&self) -> (f64, f64) {
        match *self {
            OracleProjection::Pixel { azimuth, elevation, .. } | OracleProjection::Behind { azimuth, elevation } => {
                (azimuth, elevation)
            }
        }
    }
}

/// Projects a point `subject_height` above the ground at `(lat, lon)` by
/// building both positions as 3D vectors on the sphere, rotating the offset
/// into the camera's yaw frame and dividing by depth. The camera sits
/// `height` meters above its ground point.
pub fn project_3d(cam: &OracleCamera, lat: f64, lon: f64, subject_height: f64) -> OracleProjection {
    let cam_pos = ecef(cam.lat, cam.lon, SPHERE_RADIUS_M + cam.height);
    let target = ecef(lat, lon, SPHERE_RADIUS_M + subject_height);
    let [e, n, up] = local_vector(cam.lat, cam.lon, target, cam_pos);
    let (sh, ch) = cam.heading.sin_cos();
    let forward = e * sh + n * ch;
    let right = e * ch - n * sh;
    let azimuth = right.atan2(forward);
    let elevation = up.atan2(right.hypot(forward)) - cam.pitch;
    if azimuth.abs() >= FRAC_PI_2 || elevation.abs() >= FRAC_PI_2 {
        return OracleProjection::Behind { azimuth, elevation };
    }
    let sx = (right / forward) / (cam.hfov / 2.0).tan();
    let sy = -elevation.tan() / cam.tan_half_v();
    OracleProjection::Pixel {
        azimuth,
        elevation,
        u: (sx + 1.0) / 2.0 * cam.width_px,
        v: (sy + 1.0) / 2.0 * cam.height_px,
    }
}

/// Smallest signed difference between two angles.
pub fn angle_diff(a: f64, b: f64) -> f64 {
    let mut d = (a - b) % (2.0 * PI);
    if d > PI {
        d -= 2.0 * PI;
    } else if d < -PI {
        d += 2.0 * PI;
    }
    d
}

/// Tangent-plane coordinates as written in the placement table, computed
/// independently of the production code.
pub fn tangent_plane(origin_lat: f64, origin_lon: f64, lat: f64, lon: f64) -> (f64, f64) {
    let east = SPHERE_RADIUS_M * origin_lat.cos() * angle_diff(lon, origin_lon);
    let north = SPHERE_RADIUS_M * (lat - origin_lat);
    (east, north)
}

/// Position at arc-length fraction `fraction` along a planar polyline, found by
/// cutting the polyline into `subdivisions` tiny chords in total and walking
/// them.
pub fn dense_arc_point(points: &[(f64, f64)], fraction: f64, subdivisions: usize) -> (f64, f64) {
    let segments = points.len() - 1;
    let per_segment = (subdivisions / segments).max(1);
    let mut samples = Vec::with_capacity(segments * per_segment + 1);
    for w in points.windows(2) {
        for i in 0..per_segment {
            let f = i as f64 / per_segment as f64;
            samples.push((w[0].0 + (w[1].0 - w[0].0) * f, w[0].1 + (w[1].1 - w[0].1) * f));
        }
    }
    samples.push(*points.last().unwrap());
    let mut cumulative = vec![0.0];
    for w in samples.windows(2) {
        let step = (w[1].0 - w[0].0).hypot(w[1].1 - w[0].1);
        cumulative.push(cumulative.last().unwrap() + step);
    }
    let total = *cumulative.last().unwrap();
    let target = total * fraction.clamp(0.0, 1.0);
    let idx = cumulative.partition_point(|&c| c < target).clamp(1, samples.len() - 1);
    let (c0, c1) = (cumulative[idx - 1], cumulative[idx]);
    let f = if c1 > c0 { (target - c0) / (c1 - c0) } else { 0.0 };
    let (a, b) = (samples[idx - 1], samples[idx]);
    (a.0 + (b.0 - a.0) * f, a.1 + (b.1 - a.1) * f)
}

/// World direction seen through the centre of output pixel `(x, y)` under the
/// per-axis pinhole model, as (yaw in [0, 2pi), pitch in [-pi/2, pi/2]).
pub fn pixel_direction(cam: &OracleCamera, x: u32, y: u32) -> (f64, f64) {
    let sx = 2.0 * (f64::from(x) + 0.5) / cam.width_px - 1.0;
    let sy = 2.0 * (f64::from(y) + 0.5) / cam.height_px - 1.0;
    let az = (sx * (cam.hfov / 2.0).tan()).atan();
    let el = (-sy * cam.tan_half_v()).atan();
    let mut yaw = cam.heading + az;
    let mut pitch = cam.pitch + el;
    if pitch > FRAC_PI_2 {
        pitch = PI - pitch;
        yaw += PI;
    } else if pitch < -FRAC_PI_2 {
        pitch = -PI - pitch;
        yaw += PI;
    }
    (yaw.rem_euclid(2.0 * PI), pitch)
}

/// Bilinear lookup of an arbitrary per-pixel function on a `width x height`
/// equirectangular grid whose pixel centres sit at integer coordinates, with
/// horizontal wrap and vertical clamp. Returns unrounded channel values.
pub fn bilinear<F: Fn(u32, u32) -> [u8; 3]>(f: F, width: u32, height: u32, u: f64, v: f64) -> [f64; 3] {
    let x0 = u.floor();
    let fx = u - x0;
    let xa = (x0 as i64).rem_euclid(i64::from(width)) as u32;
    let xb = (x0 as i64 + 1).rem_euclid(i64::from(width)) as u32;
    let vc = v.clamp(0.0, f64::from(height - 1));
    let y0 = vc.floor();
    let fy = vc - y0;
    let ya = y0 as u32;
    let yb = (ya + 1).min(height - 1);
    let mut out = [0.0; 3];
    for (c, o) in out.iter_mut().enumerate() {
        let p = |x, y| f64::from(f(x, y)[c]);
        *o = (p(xa, ya) * (1.0 - fx) + p(xb, ya) * fx) * (1.0 - fy) + (p(xa, yb) * (1.0 - fx) + p(xb, yb) * fx) * fy;
    }
    out
}

/// Equirectangular raster position of a world direction for a panorama whose
/// column 0 faces `north_offset`.
pub fn equirect_position(yaw: f64, pitch: f64, north_offset: f64, width: u32, height: u32) -> (f64, f64) {
    let rel = (yaw - north_offset).rem_euclid(2.0 * PI);
    let u = rel / (2.0 * PI) * f64::from(width);
    let u = if u >= f64::from(width) { 0.0 } else { u };
    (u, (0.5 - pitch / PI) * f64::from(height))
}

/// Colour of equirectangular pixel `(x, y)` in a synthetic panorama whose
/// channels are smooth functions of that pixel's (yaw, pitch) relative to
/// column 0. Wraps seamlessly in yaw.
pub fn direction_pattern(x: u32, y: u32, width: u32, height: u32) -> [u8; 3] {
    let yaw = f64::from(x) / f64::from(width) * 2.0 * PI;
    let pitch = (0.5 - f64::from(y) / f64::from(height)) * PI;
    let r = 127.5 + 127.5 * (3.0 * yaw).sin();
    let g = 255.0 * (pitch + FRAC_PI_2) / PI;
    let b = 127.5 + 127.5 * (5.0 * yaw + 2.0 * pitch).cos();
    [r.round() as u8, g.round() as u8, b.round() as u8]
}

/// A random camera and an actor ground point between 1 and `max_distance`
/// meters away in any direction. Camera longitudes are drawn near the
/// antimeridian a quarter of the time.
pub fn random_pair<R: Rng>(rng: &mut R, max_distance: f64, width_px: f64, height_px: f64) -> (OracleCamera, f64, f64) {
    let lat = rng.random_range(-70f64..70.0).to_radians();
    let lon = if rng.random_bool(0.25) {
        (180.0 - rng.random_range(0f64..0.004) * if rng.random_bool(0.5) { 1.0 } else { -1.0 }).to_radians()
    } else {
        rng.random_range(-180f64..180.0).to_radians()
    };
    let cam = OracleCamera {
        lat,
        lon,
        heading: rng.random_range(0.0..2.0 * PI),
        pitch: rng.random_range(-25f64..25.0).to_radians(),
        hfov: rng.random_range(30f64..110.0).to_radians(),
        height: rng.random_range(0.0..5.0),
        width_px,
        height_px,
    };
    let (alat, alon) = destination(lat, lon, rng.random_range(0.0..2.0 * PI), rng.random_range(1.0..max_distance));
    (cam, alat, alon)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn destination_and_haversine_agree() {
        let (lat, lon) = (0.7, -1.8);
        let (lat2, lon2) = destination(lat, lon, 1.1, 321.0);
        let (d, b) = haversine(lat, lon, lat2, lon2);
        assert!((d - 321.0).abs() < 1e-6);
        assert!((b - 1.1).abs() < 1e-9);
    }

    #[test]
    fn dense_arc_on_a_right_angle() {
        let pts = [(0.0, 0.0), (3.0, 0.0), (3.0, 4.0)];
        let (x, y) = dense_arc_point(&pts, 5.0 / 7.0, 100_000);
        assert!((x - 3.0).abs() < 1e-9 && (y - 2.0).abs() < 1e-6);
    }
}
