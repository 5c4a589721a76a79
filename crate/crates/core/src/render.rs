//! Background and mask sequences for the generation backend.

use image::{Rgb, RgbImage, Rgba, RgbaImage};
use rayon::prelude::*;
use thiserror::Error;

use crate::frames::{FrameError, RgbSequence, RgbaSequence};
use crate::geo::Viewport;
use crate::panorama::Panorama;
use crate::staging::{camera_at, sample_scene, validate_scene, ActorId, Diagnostic, PixelRect, Scene, SceneSample};

/// Opaque mask colour used unless a project overrides it.
pub const MASK_GREEN: [u8; 3] = [0, 255, 0];

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("scene is invalid: {}", .0.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("; "))]
    InvalidScene(Vec<Diagnostic>),
    #[error(transparent)]
    Frames(#[from] FrameError),
}

fn ensure_valid(scene: &Scene) -> Result<(), RenderError> {
    let diagnostics = validate_scene(scene);
    if diagnostics.is_empty() {
        Ok(())
    } else {
        Err(RenderError::InvalidScene(diagnostics))
    }
}

/// Frame `k` is the panorama seen by `camera_at(scene, k / fps)`.
pub fn render_background(scene: &Scene, pano: &Panorama) -> Result<RgbSequence, RenderError> {
    ensure_valid(scene)?;
    let frames: Vec<RgbImage> = (0..scene.frame_count())
        .into_par_iter()
        .map(|k| pano.render_view(&camera_at(scene, scene.frame_time(k)), scene.resolution))
        .collect();
    Ok(RgbSequence::new(frames, scene.fps, scene.resolution)?)
}

/// One scene sample per frame.
pub fn frame_samples(scene: &Scene) -> Vec<SceneSample> {
    (0..scene.frame_count())
        .into_par_iter()
        .map(|k| sample_scene(scene, scene.frame_time(k)))
        .collect()
}

/// A transparent frame with `rect` filled in opaque `color`.
pub fn paint_mask(rect: Option<PixelRect>, viewport: Viewport, color: [u8; 3]) -> RgbaImage {
    let mut img = RgbaImage::new(viewport.width, viewport.height);
    if let Some(r) = rect {
        let px = Rgba([color[0], color[1], color[2], 255]);
        for y in r.y0..r.y1.min(viewport.height) {
            for x in r.x0..r.x1.min(viewport.width) {
                img.put_pixel(x, y, px);
            }
        }
    }
    img
}

/// One mask sequence per actor, in actor order.
pub fn render_masks(scene: &Scene) -> Result<Vec<(ActorId, RgbaSequence)>, RenderError> {
    render_masks_with_color(scene, MASK_GREEN)
}

pub fn render_masks_with_color(scene: &Scene, color: [u8; 3]) -> Result<Vec<(ActorId, RgbaSequence)>, RenderError> {
    ensure_valid(scene)?;
    let samples = frame_samples(scene);
    scene
        .actors
        .iter()
        .map(|actor| {
            let frames: Vec<RgbaImage> = samples
                .par_iter()
                .map(|s| {
                    let rect = s.quads.iter().find(|q| q.actor_id == actor.id).map(|q| q.pixels);
                    paint_mask(rect, scene.resolution, color)
                })
                .collect();
            Ok((actor.id.clone(), RgbaSequence::new(frames, scene.fps, scene.resolution)?))
        })
        .collect()
}

/// Straight alpha-over of `src` onto an opaque pixel.
pub fn blend_over(dst: Rgb<u8>, src: Rgba<u8>) -> Rgb<u8> {
    let a = u32::from(src[3]);
    match a {
        0 => dst,
        255 => Rgb([src[0], src[1], src[2]]),
        _ => {
            let mix = |s: u8, d: u8| ((u32::from(s) * a + u32::from(d) * (255 - a) + 127) / 255) as u8;
            Rgb([mix(src[0], dst[0]), mix(src[1], dst[1]), mix(src[2], dst[2])])
        }
    }
}

pub fn composite_frame(background: &RgbImage, masks: &[&RgbaImage]) -> RgbImage {
    let mut out = background.clone();
    for mask in masks {
        for (dst, src) in out.pixels_mut().zip(mask.pixels()) {
            *dst = blend_over(*dst, *src);
        }
    }
    out
}

/// Masks alpha-composited over the background in list order.
pub fn compose_preview(background: &RgbSequence, masks: &[RgbaSequence]) -> Result<RgbSequence, RenderError> {
    for m in masks {
        if m.len() != background.len() {
            return Err(FrameError::Count { expected: background.len(), found: m.len() }.into());
        }
        if m.resolution() != background.resolution() {
            let r = m.resolution();
            let b = background.resolution();
            return Err(FrameError::Resolution { index: 0, got_w: r.width, got_h: r.height, want_w: b.width, want_h: b.height }.into());
        }
    }
    let frames: Vec<RgbImage> = background
        .frames()
        .par_iter()
        .enumerate()
        .map(|(k, bg)| {
            let layers: Vec<&RgbaImage> = masks.iter().map(|m| &m.frames()[k]).collect();
            composite_frame(bg, &layers)
        })
        .collect();
    Ok(RgbSequence::new(frames, background.fps(), background.resolution())?)
}

/// The street panel at time `t`: the view with every visible card painted on top.
pub fn preview_frame(scene: &Scene, pano: &Panorama, t: f64, color: [u8; 3]) -> RgbImage {
    let sample = sample_scene(scene, t);
    let mut frame = pano.render_view(&sample.camera, scene.resolution);
    paint_quads(&mut frame, &sample, color);
    frame
}

pub fn paint_quads(frame: &mut RgbImage, sample: &SceneSample, color: [u8; 3]) {
    let (w, h) = frame.dimensions();
    for q in &sample.quads {
        let r = q.pixels;
        for y in r.y0..r.y1.min(h) {
            for x in r.x0..r.x1.min(w) {
                frame.put_pixel(x, y, Rgb(color));
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::{enu_to_geo, CameraPose, EnuOffset, GeoPoint};
    use crate::staging::Actor;

    fn small_scene() -> Scene {
        let vp = Viewport::new(64, 36);
        let origin = GeoPoint::from_degrees(40.0, -105.0).unwrap();
        let cam = CameraPose::new(origin, 0.0, 0.0, 1.5, 2.5, vp).unwrap();
        let mut s = Scene::new("n", cam);
        s.resolution = vp;
        s.duration = 1.0;
        s.fps = 4.0;
        s.actors.push(Actor::new("a", enu_to_geo(EnuOffset::new(0.0, 10.0), origin).unwrap()));
        s
    }

    fn pano() -> Panorama {
        Panorama::new(RgbImage::from_fn(256, 128, |x, y| Rgb([x as u8, y as u8, 7])), 0.0).unwrap()
    }

    #[test]
    fn static_scene_gives_identical_frames() {
        let s = small_scene();
        let bg = render_background(&s, &pano()).unwrap();
        assert_eq!(bg.len(), 4);
        assert!(bg.frames().windows(2).all(|w| w[0] == w[1]));
        let masks = render_masks(&s).unwrap();
        assert_eq!(masks.len(), 1);
        assert!(masks[0].1.frames().windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn invalid_scene_is_refused() {
        let mut s = small_scene();
        s.keyframes.clear();
        assert!(matches!(render_background(&s, &pano()), Err(RenderError::InvalidScene(_))));
    }

    #[test]
    fn blend_over_cases() {
        let d = Rgb([10, 20, 30]);
        assert_eq!(blend_over(d, Rgba([1, 2, 3, 0])), d);
        assert_eq!(blend_over(d, Rgba([1, 2, 3, 255])), Rgb([1, 2, 3]));
        assert_eq!(blend_over(Rgb([0, 0, 0]), Rgba([255, 255, 255, 128])), Rgb([128, 128, 128]));
    }

    #[test]
    fn compose_edge_cases() {
        let s = small_scene();
        let bg = render_background(&s, &pano()).unwrap();
        assert_eq!(compose_preview(&bg, &[]).unwrap(), bg);

        let clear = RgbaSequence::new(vec![RgbaImage::new(64, 36); 4], s.fps, s.resolution).unwrap();
        assert_eq!(compose_preview(&bg, &[clear]).unwrap(), bg);

        let full = RgbaSequence::new(vec![RgbaImage::from_pixel(64, 36, Rgba([0, 255, 0, 255])); 4], s.fps, s.resolution).unwrap();
        let green = compose_preview(&bg, &[full]).unwrap();
        assert!(green.frames().iter().all(|f| f.pixels().all(|p| *p == Rgb([0, 255, 0]))));

        let short = RgbaSequence::new(vec![RgbaImage::new(64, 36); 3], s.fps, s.resolution).unwrap();
        assert!(compose_preview(&bg, &[short]).is_err());
    }

    #[test]
    fn preview_matches_composited_masks() {
        let s = small_scene();
        let p = pano();
        let bg = render_background(&s, &p).unwrap();
        let masks: Vec<_> = render_masks(&s).unwrap().into_iter().map(|(_, m)| m).collect();
        let composed = compose_preview(&bg, &masks).unwrap();
        assert_eq!(preview_frame(&s, &p, 0.0, MASK_GREEN), composed.frames()[0]);
    }
}
