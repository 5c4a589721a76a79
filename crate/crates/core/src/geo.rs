//! Geodetic anchors, camera poses and the ground-to-screen projection chain.
//!
//! Actors are placed on a local East-North-Up tangent plane centred on the
//! camera, reduced to a range and compass bearing, turned into angles relative
//! to the camera's heading and pitch, and finally mapped onto the screen with a
//! per-axis pinhole model:
//!
//! ```text
//! dx = R cos(lat_c) wrap(lon_a - lon_c)      dz = R (lat_a - lat_c)
//! d  = hypot(dx, dz)                         bearing = atan2(dx, dz)
//! azimuth   = wrap(bearing - heading)        elevation = atan2(h - h_c, d) - pitch
//! s_x = tan(azimuth) / tan(hfov/2)           s_y = -tan(elevation) / tan(vfov/2)
//! u   = (s_x + 1) / 2 * W                    v   = (s_y + 1) / 2 * H
//! ```
//!
//! All angles are radians. Degrees only appear at file and HTTP boundaries.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Mean earth radius used for the tangent-plane approximation (meters).
pub const EARTH_RADIUS_M: f64 = 6_371_008.8;

/// Offsets at or beyond this distance are rejected by [`enu_offset`].
pub const MAX_LOCAL_RANGE_M: f64 = 10_000.0;

/// Cameras this close to a pole (or closer) are rejected.
pub const POLE_GUARD_RAD: f64 = 89.0 * PI / 180.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeoError {
    #[error("camera latitude {lat_deg:.4} deg is within 1 deg of a pole")]
    PoleProximity { lat_deg: f64 },
    #[error("offset of {distance_m:.1} m is outside the local tangent-plane range")]
    OutOfRange { distance_m: f64 },
    #[error("ray does not reach the ground in front of the camera")]
    NoGroundIntersection,
    #[error("invalid {what}: {value}")]
    Invalid { what: &'static str, value: f64 },
}

/// Maps any finite angle into `(-pi, pi]`. Values already in range are returned
/// untouched, which makes the function idempotent bit-for-bit.
pub fn wrap_angle(x: f64) -> f64 {
    if x > -PI && x <= PI {
        return x;
    }
    // fmod is exact, so only the final shift can round.
    let mut r = x.rem_euclid(TAU);
    if r > PI {
        r -= TAU;
    }
    r
}

/// Maps any finite angle into `[0, 2pi)`.
pub fn normalize_heading(x: f64) -> f64 {
    if (0.0..TAU).contains(&x) {
        return x;
    }
    let r = x.rem_euclid(TAU);
    if r >= TAU {
        0.0
    } else {
        r
    }
}

/// A point on the ground, latitude and longitude in radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    lat: f64,
    lon: f64,
}

impl GeoPoint {
    /// Validates the latitude and normalizes the longitude into `(-pi, pi]`.
    pub fn new(lat: f64, lon: f64) -> Result<Self, GeoError> {
        if !lat.is_finite() || lat.abs() > FRAC_PI_2 {
            return Err(GeoError::Invalid { what: "latitude", value: lat });
        }
        if !lon.is_finite() {
            return Err(GeoError::Invalid { what: "longitude", value: lon });
        }
        Ok(Self { lat, lon: wrap_angle(lon) })
    }

    pub fn from_degrees(lat_deg: f64, lon_deg: f64) -> Result<Self, GeoError> {
        Self::new(lat_deg.to_radians(), lon_deg.to_radians())
    }

    pub fn lat(&self) -> f64 {
        self.lat
    }

    pub fn lon(&self) -> f64 {
        self.lon
    }

    pub fn lat_deg(&self) -> f64 {
        self.lat.to_degrees()
    }

    pub fn lon_deg(&self) -> f64 {
        self.lon.to_degrees()
    }
}

/// Tangent-plane offset of a point from the camera, in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnuOffset {
    pub east: f64,
    pub north: f64,
}

impl EnuOffset {
    pub fn new(east: f64, north: f64) -> Self {
        Self { east, north }
    }

    pub fn magnitude(&self) -> f64 {
        self.east.hypot(self.north)
    }
}

/// Ground range and compass bearing (0 = north, +pi/2 = east).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RangeBearing {
    pub distance: f64,
    pub bearing: f64,
}

/// Angles of a target relative to the camera's optical axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelativeAngles {
    pub azimuth: f64,
    pub elevation: f64,
}

/// Output raster size in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Viewport {
    pub width: u32,
    pub height: u32,
}

impl Viewport {
    pub const fn new(width: u32, height: u32) -> Self {
        Self { width, height }
    }

    pub fn aspect(&self) -> f64 {
        f64::from(self.width) / f64::from(self.height)
    }
}

/// Vertical field of view that keeps pixels square for a given horizontal one.
pub fn vertical_fov_for(horizontal_fov: f64, viewport: Viewport) -> f64 {
    2.0 * ((horizontal_fov / 2.0).tan() / viewport.aspect()).atan()
}

/// A camera fixed at a panorama node. Heading is clockwise from true north,
/// pitch positive up.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraPose {
    pub position: GeoPoint,
    pub heading: f64,
    pub pitch: f64,
    pub horizontal_fov: f64,
    pub vertical_fov: f64,
    pub height: f64,
}

impl CameraPose {
    /// Builds a pose whose vertical field of view matches the viewport aspect.
    pub fn new(
        position: GeoPoint,
        heading: f64,
        pitch: f64,
        horizontal_fov: f64,
        height: f64,
        viewport: Viewport,
    ) -> Result<Self, GeoError> {
        let pose = Self {
            position,
            heading: normalize_heading(heading),
            pitch,
            horizontal_fov,
            vertical_fov: vertical_fov_for(horizontal_fov, viewport),
            height,
        };
        pose.validate()?;
        Ok(pose)
    }

    pub fn validate(&self) -> Result<(), GeoError> {
        for (what, fov) in [("horizontal fov", self.horizontal_fov), ("vertical fov", self.vertical_fov)] {
            if !(fov > 0.0 && fov < PI) {
                return Err(GeoError::Invalid { what, value: fov });
            }
        }
        if !self.height.is_finite() || self.height < 0.0 {
            return Err(GeoError::Invalid { what: "camera height", value: self.height });
        }
        if !self.pitch.is_finite() || self.pitch.abs() > FRAC_PI_2 {
            return Err(GeoError::Invalid { what: "pitch", value: self.pitch });
        }
        if !(0.0..TAU).contains(&self.heading) {
            return Err(GeoError::Invalid { what: "heading", value: self.heading });
        }
        Ok(())
    }
}

/// Where a projected point lands.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Visibility {
    OnScreen,
    OffScreen,
    BehindCamera,
}

/// A projected point in pixel coordinates (x right, y down).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "visibility", rename_all = "snake_case")]
pub enum ScreenPoint {
    OnScreen { u: f64, v: f64 },
    OffScreen { u: f64, v: f64 },
    BehindCamera,
}

impl ScreenPoint {
    pub fn visibility(&self) -> Visibility {
        match self {
            ScreenPoint::OnScreen { .. } => Visibility::OnScreen,
            ScreenPoint::OffScreen { .. } => Visibility::OffScreen,
            ScreenPoint::BehindCamera => Visibility::BehindCamera,
        }
    }

    pub fn coords(&self) -> Option<(f64, f64)> {
        match *self {
            ScreenPoint::OnScreen { u, v } | ScreenPoint::OffScreen { u, v } => Some((u, v)),
            ScreenPoint::BehindCamera => None,
        }
    }
}

/// Step 1: tangent-plane offset of `actor` relative to `camera`.
pub fn enu_offset(actor: GeoPoint, camera: GeoPoint) -> Result<EnuOffset, GeoError> {
    if camera.lat.abs() >= POLE_GUARD_RAD {
        return Err(GeoError::PoleProximity { lat_deg: camera.lat.to_degrees() });
    }
    let east = EARTH_RADIUS_M * camera.lat.cos() * wrap_angle(actor.lon - camera.lon);
    let north = EARTH_RADIUS_M * (actor.lat - camera.lat);
    let offset = EnuOffset { east, north };
    let distance = offset.magnitude();
    if distance >= MAX_LOCAL_RANGE_M {
        return Err(GeoError::OutOfRange { distance_m: distance });
    }
    Ok(offset)
}

/// Inverse of [`enu_offset`]: the ground point at `offset` from `origin`.
pub fn enu_to_geo(offset: EnuOffset, origin: GeoPoint) -> Result<GeoPoint, GeoError> {
    if origin.lat.abs() >= POLE_GUARD_RAD {
        return Err(GeoError::PoleProximity { lat_deg: origin.lat.to_degrees() });
    }
    let lat = origin.lat + offset.north / EARTH_RADIUS_M;
    let lon = origin.lon + offset.east / (EARTH_RADIUS_M * origin.lat.cos());
    GeoPoint::new(lat, lon)
}

/// Step 2: ground distance and compass bearing. A zero offset has bearing 0.
pub fn range_bearing(offset: EnuOffset) -> RangeBearing {
    let distance = offset.magnitude();
    let bearing = if distance == 0.0 { 0.0 } else { offset.east.atan2(offset.north) };
    RangeBearing { distance, bearing }
}

/// Step 3: azimuth and elevation relative to the optical axis. `subject_height`
/// lifts the target above the ground plane; at zero this is the plain ground
/// point `-atan2(h_c, d) - pitch`.
pub fn camera_relative_angles(range: RangeBearing, camera: &CameraPose, subject_height: f64) -> RelativeAngles {
    RelativeAngles {
        azimuth: wrap_angle(range.bearing - camera.heading),
        elevation: (subject_height - camera.height).atan2(range.distance) - camera.pitch,
    }
}

/// Steps 4 and 5: per-axis pinhole mapping to pixels.
pub fn project_point(angles: RelativeAngles, camera: &CameraPose, viewport: Viewport) -> ScreenPoint {
    if angles.azimuth.abs() >= FRAC_PI_2 || angles.elevation.abs() >= FRAC_PI_2 {
        return ScreenPoint::BehindCamera;
    }
    let sx = angles.azimuth.tan() / (camera.horizontal_fov / 2.0).tan();
    let sy = -angles.elevation.tan() / (camera.vertical_fov / 2.0).tan();
    let (u, v) = screen_scale(sx, sy, viewport);
    if (0.0..f64::from(viewport.width)).contains(&u) && (0.0..f64::from(viewport.height)).contains(&v) {
        ScreenPoint::OnScreen { u, v }
    } else {
        ScreenPoint::OffScreen { u, v }
    }
}

/// Normalized `[-1, 1]` screen coordinates to pixels.
pub fn screen_scale(sx: f64, sy: f64, viewport: Viewport) -> (f64, f64) {
    (scale_axis(sx, viewport.width), scale_axis(sy, viewport.height))
}

/// `(s + 1) / 2 * extent`, evaluated so that mirrored inputs are exactly
/// symmetric: negative `s` is computed as `extent - scale(-s)`, and that
/// subtraction is exact for `|s| <= 3`, so `scale(s) + scale(-s) == extent`.
pub fn scale_axis(s: f64, extent: u32) -> f64 {
    let extent = f64::from(extent);
    let half = extent / 2.0;
    if s < 0.0 {
        extent - (-s).mul_add(half, half)
    } else {
        s.mul_add(half, half)
    }
}

/// Pixels back to normalized screen coordinates.
pub fn screen_unscale(u: f64, v: f64, viewport: Viewport) -> (f64, f64) {
    (
        2.0 * u / f64::from(viewport.width) - 1.0,
        2.0 * v / f64::from(viewport.height) - 1.0,
    )
}

/// Relative angles of the ray through normalized screen coordinates.
pub fn ray_angles(sx: f64, sy: f64, camera: &CameraPose) -> RelativeAngles {
    RelativeAngles {
        azimuth: (sx * (camera.horizontal_fov / 2.0).tan()).atan(),
        elevation: (-sy * (camera.vertical_fov / 2.0).tan()).atan(),
    }
}

/// The full chain for a point `subject_height` meters above `actor`.
pub fn project_actor_point(
    actor: GeoPoint,
    subject_height: f64,
    camera: &CameraPose,
    viewport: Viewport,
) -> Result<ScreenPoint, GeoError> {
    let offset = enu_offset(actor, camera.position)?;
    let angles = camera_relative_angles(range_bearing(offset), camera, subject_height);
    Ok(project_point(angles, camera, viewport))
}

/// Casts the ray through pixel `(u, v)` onto the flat ground plane.
pub fn unproject_to_ground(u: f64, v: f64, camera: &CameraPose, viewport: Viewport) -> Result<GeoPoint, GeoError> {
    let (sx, sy) = screen_unscale(u, v, viewport);
    let angles = ray_angles(sx, sy, camera);
    let depression = -(camera.pitch + angles.elevation);
    if camera.height <= 0.0 || depression <= 0.0 || depression >= FRAC_PI_2 {
        return Err(GeoError::NoGroundIntersection);
    }
    let distance = camera.height / depression.tan();
    let bearing = camera.heading + angles.azimuth;
    let offset = EnuOffset::new(distance * bearing.sin(), distance * bearing.cos());
    if offset.magnitude() >= MAX_LOCAL_RANGE_M {
        return Err(GeoError::OutOfRange { distance_m: offset.magnitude() });
    }
    enu_to_geo(offset, camera.position)
}
