//! A deterministic stand-in for a diffusion server. Each mask is "generated"
//! by alpha-compositing a seeded pseudo-texture into its region of the
//! background, one mask after the other, each taking a fixed latency.

use std::path::Path;
use std::sync::atomic::{AtomicU32, Ordering};
use std::time::{Duration, Instant};

use image::{Rgb, RgbImage, Rgba, RgbaImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use streetstage_core::frames::sha256_hex;
use streetstage_core::render::blend_over;
use streetstage_core::{FrameSequence, FrameSequenceRef};

use crate::backend::{Backend, BackendError, MaskProgress};
use crate::bundle::JobBundle;

const TILE: u32 = 64;

#[derive(Debug, Default)]
pub struct MockBackend {
    latency: Duration,
    unreachable_for: AtomicU32,
    fail_mask: Option<usize>,
}

impl MockBackend {
    /// `latency` is the simulated time each mask takes.
    pub fn new(latency: Duration) -> Self {
        Self { latency, ..Self::default() }
    }

    /// Rejects the first `n` submissions as unreachable.
    pub fn unreachable_for(self, n: u32) -> Self {
        self.unreachable_for.store(n, Ordering::SeqCst);
        self
    }

    /// Makes the given mask fail after its latency has passed.
    pub fn fail_mask(mut self, index: usize) -> Self {
        self.fail_mask = Some(index);
        self
    }

    pub fn latency(&self) -> Duration {
        self.latency
    }
}

/// The texture used for mask `index` of a bundle.
pub fn mask_texture(bundle_id: &str, index: usize) -> RgbImage {
    let digest = sha256_hex(format!("{bundle_id}:{index}").as_bytes());
    let mut seed = [0u8; 32];
    for (i, b) in seed.iter_mut().enumerate() {
        *b = u8::from_str_radix(&digest[2 * i..2 * i + 2], 16).expect("hex digest");
    }
    let mut rng = ChaCha8Rng::from_seed(seed);
    let base: [u8; 3] = rng.random();
    RgbImage::from_fn(TILE, TILE, |_, _| {
        let n: [u8; 3] = rng.random();
        Rgb(std::array::from_fn(|c| base[c] / 2 + n[c] / 2))
    })
}

/// Composites one mask frame's texture into `frame`. The texture drifts a
/// little every frame so the result is not a static overlay.
pub fn composite_mask(frame: &mut RgbImage, mask: &RgbaImage, texture: &RgbImage, frame_index: usize) {
    let (dx, dy) = ((frame_index as u32 * 3) % TILE, (frame_index as u32 * 2) % TILE);
    for (x, y, m) in mask.enumerate_pixels() {
        let a = m.0[3];
        if a == 0 {
            continue;
        }
        let t = texture.get_pixel((x + dx) % TILE, (y + dy) % TILE).0;
        let p = frame.get_pixel_mut(x, y);
        *p = blend_over(*p, Rgba([t[0], t[1], t[2], a]));
    }
}

fn sleep_until(deadline: Instant) {
    let now = Instant::now();
    if deadline > now {
        std::thread::sleep(deadline - now);
    }
}

impl Backend for MockBackend {
    fn name(&self) -> &str {
        "mock"
    }

    fn submit(&self, bundle: &JobBundle) -> Result<String, BackendError> {
        let left = self.unreachable_for.load(Ordering::SeqCst);
        if left > 0 {
            self.unreachable_for.store(left - 1, Ordering::SeqCst);
            return Err(BackendError::Unreachable("mock backend is down".into()));
        }
        Ok(format!("mock-{}", &bundle.bundle_id[..16.min(bundle.bundle_id.len())]))
    }

    fn run(
        &self,
        bundle: &JobBundle,
        _handle: &str,
        out_dir: &Path,
        progress: &mut dyn FnMut(MaskProgress),
    ) -> Result<FrameSequenceRef, BackendError> {
        if bundle.masks.is_empty() {
            return Err(BackendError::Protocol("bundle has no masks".into()));
        }
        let background = bundle.background.load::<Rgb<u8>>()?;
        let (fps, resolution) = (background.fps(), background.resolution());
        let mut frames = background.into_frames();
        let last = bundle.masks.len() - 1;
        for (i, mask) in bundle.masks.iter().enumerate() {
            let deadline = Instant::now() + self.latency;
            progress(MaskProgress::Started(i));
            if self.fail_mask == Some(i) {
                sleep_until(deadline);
                if i > 0 {
                    // Earlier sub-results are kept next to the failed job.
                    FrameSequence::new(frames, fps, resolution)?.write_dir(&out_dir.join("partial"))?;
                }
                return Err(BackendError::MaskFailed { index: i, reason: "simulated failure".into() });
            }
            let texture = mask_texture(&bundle.bundle_id, i);
            for (k, frame) in frames.iter_mut().enumerate() {
                let m = mask.frames.load_frame::<Rgba<u8>>(k)?;
                composite_mask(frame, &m, &texture, k);
            }
            if i == last {
                let out = FrameSequence::new(std::mem::take(&mut frames), fps, resolution)?.write_dir(out_dir)?;
                sleep_until(deadline);
                progress(MaskProgress::Done(i));
                return Ok(out);
            }
            sleep_until(deadline);
            progress(MaskProgress::Done(i));
        }
        unreachable!("bundles have at least one mask")
    }
}
