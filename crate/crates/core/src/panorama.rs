//! Equirectangular panoramas and perspective view synthesis.
//!
//! Pixel centres sit at integer coordinates: column `i` is sampled exactly at
//! `u_e = i`, so `u_e = W_e - 0.5` blends the last and first columns.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use image::{Rgb, RgbImage};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::{normalize_heading, screen_unscale, wrap_angle, CameraPose, Viewport};

#[derive(Debug, Error)]
pub enum PanoramaError {
    #[error("failed to decode panorama: {0}")]
    Decode(#[from] image::ImageError),
    #[error("panorama is {width}x{height}, expected a 2:1 equirectangular raster")]
    NotEquirectangular { width: u32, height: u32 },
    #[error("({u}, {v}) is outside the {width}x{height} raster")]
    OutOfRaster { u: f64, v: f64, width: u32, height: u32 },
}

/// A world direction, yaw clockwise from north in `[0, 2pi)`, pitch positive up.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ViewDirection {
    pub yaw: f64,
    pub pitch: f64,
}

/// A full 360x180 degree panorama. `north_offset` is the yaw of true north
/// within the image, i.e. the direction seen at column 0.
#[derive(Debug, Clone)]
pub struct Panorama {
    pixels: RgbImage,
    north_offset: f64,
}

impl Panorama {
    pub fn new(pixels: RgbImage, north_offset: f64) -> Result<Self, PanoramaError> {
        let (width, height) = pixels.dimensions();
        if height == 0 || width != 2 * height {
            return Err(PanoramaError::NotEquirectangular { width, height });
        }
        Ok(Self { pixels, north_offset: normalize_heading(north_offset) })
    }

    /// Decodes a PNG or JPEG panorama.
    pub fn decode(bytes: &[u8], north_offset: f64) -> Result<Self, PanoramaError> {
        let img = image::load_from_memory(bytes)?.to_rgb8();
        Self::new(img, north_offset)
    }

    pub fn width(&self) -> u32 {
        self.pixels.width()
    }

    pub fn height(&self) -> u32 {
        self.pixels.height()
    }

    pub fn north_offset(&self) -> f64 {
        self.north_offset
    }

    pub fn pixels(&self) -> &RgbImage {
        &self.pixels
    }

    /// The same image with a different compass calibration.
    pub fn with_north_offset(&self, north_offset: f64) -> Self {
        Self { pixels: self.pixels.clone(), north_offset: normalize_heading(north_offset) }
    }

    /// Raster position of a world direction.
    pub fn dir_to_equirect(&self, dir: ViewDirection) -> (f64, f64) {
        (
            self.relative_yaw_to_u(dir.yaw - self.north_offset),
            self.pitch_to_v(dir.pitch),
        )
    }

    /// Inverse of [`Panorama::dir_to_equirect`].
    pub fn equirect_to_dir(&self, u: f64, v: f64) -> Result<ViewDirection, PanoramaError> {
        let (w, h) = (f64::from(self.width()), f64::from(self.height()));
        if !(0.0..w).contains(&u) || !(0.0..h).contains(&v) {
            return Err(PanoramaError::OutOfRaster { u, v, width: self.width(), height: self.height() });
        }
        Ok(ViewDirection {
            yaw: normalize_heading(self.north_offset + u / w * TAU),
            pitch: (0.5 - v / h) * PI,
        })
    }

    fn relative_yaw_to_u(&self, relative_yaw: f64) -> f64 {
        let w = f64::from(self.width());
        let u = (wrap_angle(relative_yaw) / TAU).rem_euclid(1.0) * w;
        // rem_euclid can round up to exactly 1.0 for tiny negative inputs
        if u >= w {
            0.0
        } else {
            u
        }
    }

    fn pitch_to_v(&self, pitch: f64) -> f64 {
        (0.5 - pitch / PI) * f64::from(self.height())
    }

    /// Bilinear sample with horizontal wraparound and vertical clamping.
    pub fn sample(&self, u: f64, v: f64) -> Rgb<u8> {
        let (w, h) = (self.width() as i64, self.height() as i64);
        let x0 = u.floor();
        let fx = u - x0;
        let xa = (x0 as i64).rem_euclid(w) as u32;
        let xb = ((x0 as i64) + 1).rem_euclid(w) as u32;

        let vc = v.clamp(0.0, (h - 1) as f64);
        let y0 = vc.floor();
        let fy = vc - y0;
        let ya = y0 as u32;
        let yb = ((y0 as i64) + 1).min(h - 1) as u32;

        let p00 = self.pixels.get_pixel(xa, ya).0;
        let p10 = self.pixels.get_pixel(xb, ya).0;
        let p01 = self.pixels.get_pixel(xa, yb).0;
        let p11 = self.pixels.get_pixel(xb, yb).0;
        let mut out = [0u8; 3];
        for c in 0..3 {
            let top = f64::from(p00[c]) * (1.0 - fx) + f64::from(p10[c]) * fx;
            let bottom = f64::from(p01[c]) * (1.0 - fx) + f64::from(p11[c]) * fx;
            let value = top * (1.0 - fy) + bottom * fy;
            out[c] = (value + 0.5).floor().clamp(0.0, 255.0) as u8;
        }
        Rgb(out)
    }

    /// Renders the perspective view seen by `camera` from this panorama's node.
    ///
    /// Every output pixel centre is turned back into camera-relative angles with
    /// the same per-axis pinhole model used to place actors, so masks and
    /// background agree exactly. Rays that pass over a pole are reflected.
    pub fn render_view(&self, camera: &CameraPose, viewport: Viewport) -> RgbImage {
        let (width, height) = (viewport.width, viewport.height);
        let tan_h = (camera.horizontal_fov / 2.0).tan();
        let tan_v = (camera.vertical_fov / 2.0).tan();
        let base_yaw = wrap_angle(camera.heading - self.north_offset);

        // The per-axis model makes azimuth depend on the column only and
        // elevation on the row only.
        let azimuths: Vec<f64> = (0..width)
            .map(|x| {
                let (sx, _) = screen_unscale(f64::from(x) + 0.5, 0.0, viewport);
                (sx * tan_h).atan()
            })
            .collect();
        let columns_direct: Vec<f64> = azimuths.iter().map(|a| self.relative_yaw_to_u(base_yaw + a)).collect();
        let columns_flipped: Vec<f64> = azimuths.iter().map(|a| self.relative_yaw_to_u(base_yaw + a + PI)).collect();

        let mut out = RgbImage::new(width, height);
        out.par_chunks_mut(width as usize * 3).enumerate().for_each(|(y, row)| {
            let (_, sy) = screen_unscale(0.0, y as f64 + 0.5, viewport);
            let pitch = camera.pitch + (-sy * tan_v).atan();
            let (pitch, columns) = if pitch > FRAC_PI_2 {
                (PI - pitch, &columns_flipped)
            } else if pitch < -FRAC_PI_2 {
                (-PI - pitch, &columns_flipped)
            } else {
                (pitch, &columns_direct)
            };
            let v = self.pitch_to_v(pitch);
            for (x, px) in row.chunks_exact_mut(3).enumerate() {
                px.copy_from_slice(&self.sample(columns[x], v).0);
            }
        });
        out
    }
}
