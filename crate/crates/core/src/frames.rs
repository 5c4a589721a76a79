//! Fixed-rate raster sequences and their on-disk form: a directory of
//! `frame_%05d.png` files plus a `manifest.json`.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use image::codecs::png::{CompressionType, FilterType, PngEncoder};
use image::{ExtendedColorType, ImageBuffer, ImageEncoder, Pixel, Rgb, Rgba};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::geo::Viewport;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Error)]
pub enum FrameError {
    #[error("io error at {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("image error at {path}: {source}")]
    Image { path: PathBuf, source: image::ImageError },
    #[error("bad manifest at {path}: {reason}")]
    Manifest { path: PathBuf, reason: String },
    #[error("frame {index} is {got_w}x{got_h}, sequence is {want_w}x{want_h}")]
    Resolution { index: usize, got_w: u32, got_h: u32, want_w: u32, want_h: u32 },
    #[error("frame {index} does not match its recorded hash")]
    HashMismatch { index: usize },
    #[error("expected {expected} frames, found {found}")]
    Count { expected: usize, found: usize },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> FrameError + '_ {
    move |source| FrameError::Io { path: path.to_owned(), source }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChannelLayout {
    Rgb,
    Rgba,
}

/// Pixel types a sequence can hold.
pub trait FramePixel: Pixel<Subpixel = u8> + Send + Sync + 'static {
    const LAYOUT: ChannelLayout;
    const COLOR: ExtendedColorType;
    fn from_dynamic(img: image::DynamicImage) -> ImageBuffer<Self, Vec<u8>>;
}

impl FramePixel for Rgb<u8> {
    const LAYOUT: ChannelLayout = ChannelLayout::Rgb;
    const COLOR: ExtendedColorType = ExtendedColorType::Rgb8;
    fn from_dynamic(img: image::DynamicImage) -> ImageBuffer<Self, Vec<u8>> {
        img.into_rgb8()
    }
}

impl FramePixel for Rgba<u8> {
    const LAYOUT: ChannelLayout = ChannelLayout::Rgba;
    const COLOR: ExtendedColorType = ExtendedColorType::Rgba8;
    fn from_dynamic(img: image::DynamicImage) -> ImageBuffer<Self, Vec<u8>> {
        img.into_rgba8()
    }
}

/// Ordered frames sharing one resolution and frame rate.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSequence<P: FramePixel> {
    frames: Vec<ImageBuffer<P, Vec<u8>>>,
    fps: f64,
    resolution: Viewport,
}

pub type RgbSequence = FrameSequence<Rgb<u8>>;
pub type RgbaSequence = FrameSequence<Rgba<u8>>;

impl<P: FramePixel> FrameSequence<P> {
    pub fn new(frames: Vec<ImageBuffer<P, Vec<u8>>>, fps: f64, resolution: Viewport) -> Result<Self, FrameError> {
        for (index, f) in frames.iter().enumerate() {
            if f.dimensions() != (resolution.width, resolution.height) {
                return Err(FrameError::Resolution {
                    index,
                    got_w: f.width(),
                    got_h: f.height(),
                    want_w: resolution.width,
                    want_h: resolution.height,
                });
            }
        }
        Ok(Self { frames, fps, resolution })
    }

    pub fn frames(&self) -> &[ImageBuffer<P, Vec<u8>>] {
        &self.frames
    }

    pub fn into_frames(self) -> Vec<ImageBuffer<P, Vec<u8>>> {
        self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn fps(&self) -> f64 {
        self.fps
    }

    pub fn resolution(&self) -> Viewport {
        self.resolution
    }

    pub fn layout(&self) -> ChannelLayout {
        P::LAYOUT
    }

    /// Writes the sequence as numbered PNGs plus a manifest.
    pub fn write_dir(&self, dir: &Path) -> Result<FrameSequenceRef, FrameError> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let entries = self
            .frames
            .par_iter()
            .enumerate()
            .map(|(k, frame)| {
                let bytes = encode_png(frame.as_raw(), frame.width(), frame.height(), P::COLOR)
                    .map_err(|source| FrameError::Image { path: dir.join(frame_file_name(k)), source })?;
                let file = frame_file_name(k);
                let path = dir.join(&file);
                fs::write(&path, &bytes).map_err(io_err(&path))?;
                Ok(FrameEntry { file, sha256: sha256_hex(&bytes) })
            })
            .collect::<Result<Vec<_>, FrameError>>()?;
        let manifest = FrameManifest {
            fps: self.fps,
            width: self.resolution.width,
            height: self.resolution.height,
            count: entries.len(),
            channels: P::LAYOUT,
            frames: entries,
        };
        manifest.write(dir)?;
        Ok(FrameSequenceRef { dir: dir.to_owned(), manifest })
    }
}

pub fn frame_file_name(k: usize) -> String {
    format!("frame_{k:05}.png")
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// PNG bytes for a raw 8-bit buffer. Same input, same bytes.
pub fn encode_png(raw: &[u8], width: u32, height: u32, color: ExtendedColorType) -> Result<Vec<u8>, image::ImageError> {
    let mut out = Vec::new();
    PngEncoder::new_with_quality(&mut out, CompressionType::Fast, FilterType::Sub).write_image(raw, width, height, color)?;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameEntry {
    pub file: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameManifest {
    pub fps: f64,
    pub width: u32,
    pub height: u32,
    pub count: usize,
    pub channels: ChannelLayout,
    pub frames: Vec<FrameEntry>,
}

impl FrameManifest {
    pub fn resolution(&self) -> Viewport {
        Viewport::new(self.width, self.height)
    }

    pub fn read(dir: &Path) -> Result<Self, FrameError> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(io_err(&path))?;
        let manifest: FrameManifest =
            serde_json::from_str(&text).map_err(|e| FrameError::Manifest { path: path.clone(), reason: e.to_string() })?;
        if manifest.count != manifest.frames.len() {
            return Err(FrameError::Manifest {
                path,
                reason: format!("count {} but {} frame entries", manifest.count, manifest.frames.len()),
            });
        }
        Ok(manifest)
    }

    pub fn write(&self, dir: &Path) -> Result<(), FrameError> {
        let path = dir.join(MANIFEST_FILE);
        let file = fs::File::create(&path).map_err(io_err(&path))?;
        let mut w = BufWriter::new(file);
        serde_json::to_writer_pretty(&mut w, self)
            .map_err(|e| FrameError::Manifest { path: path.clone(), reason: e.to_string() })?;
        w.write_all(b"\n").and_then(|_| w.flush()).map_err(io_err(&path))
    }

    /// Digest of the manifest contents, independent of where the frames live.
    pub fn content_hash(&self) -> String {
        sha256_hex(&serde_json::to_vec(self).expect("manifest serializes"))
    }
}

/// A sequence stored on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameSequenceRef {
    pub dir: PathBuf,
    pub manifest: FrameManifest,
}

impl FrameSequenceRef {
    pub fn open(dir: &Path) -> Result<Self, FrameError> {
        Ok(Self { dir: dir.to_owned(), manifest: FrameManifest::read(dir)? })
    }

    pub fn len(&self) -> usize {
        self.manifest.count
    }

    pub fn is_empty(&self) -> bool {
        self.manifest.count == 0
    }

    pub fn frame_path(&self, k: usize) -> PathBuf {
        self.dir.join(&self.manifest.frames[k].file)
    }

    /// Loads and hash-checks frame `k`.
    pub fn load_frame<P: FramePixel>(&self, k: usize) -> Result<ImageBuffer<P, Vec<u8>>, FrameError> {
        let entry = self.manifest.frames.get(k).ok_or(FrameError::Count { expected: k + 1, found: self.manifest.count })?;
        let path = self.dir.join(&entry.file);
        let bytes = fs::read(&path).map_err(io_err(&path))?;
        if sha256_hex(&bytes) != entry.sha256 {
            return Err(FrameError::HashMismatch { index: k });
        }
        let img = image::load_from_memory(&bytes).map_err(|source| FrameError::Image { path: path.clone(), source })?;
        let frame = P::from_dynamic(img);
        if frame.dimensions() != (self.manifest.width, self.manifest.height) {
            return Err(FrameError::Resolution {
                index: k,
                got_w: frame.width(),
                got_h: frame.height(),
                want_w: self.manifest.width,
                want_h: self.manifest.height,
            });
        }
        Ok(frame)
    }

    pub fn load<P: FramePixel>(&self) -> Result<FrameSequence<P>, FrameError> {
        let frames = (0..self.len()).map(|k| self.load_frame::<P>(k)).collect::<Result<Vec<_>, _>>()?;
        FrameSequence::new(frames, self.manifest.fps, self.manifest.resolution())
    }
}
