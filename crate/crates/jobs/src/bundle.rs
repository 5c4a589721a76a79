//! The four inputs handed to a generation backend: background frames, mask
//! frames, prompts and optional reference images, plus sampling settings the
//! engine passes through without interpreting.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use streetstage_core::frames::sha256_hex;
use streetstage_core::render::{render_background, render_masks_with_color, RenderError, MASK_GREEN};
use streetstage_core::{ChannelLayout, FrameSequenceRef, Panorama, Scene};

pub type SamplingConfig = BTreeMap<String, Value>;

/// Backend settings used unless the scene overrides them.
pub fn default_sampling() -> SamplingConfig {
    let mut m = SamplingConfig::new();
    m.insert("steps".into(), json!(6));
    m.insert("guidance".into(), json!(1));
    m.insert("shift".into(), json!(5));
    m.insert("upscale".into(), json!(true));
    m.insert("model".into(), json!("default"));
    m
}

#[derive(Debug, Error)]
pub enum BundleError {
    #[error("scene prompt is empty")]
    EmptyPrompt,
    #[error("a job needs at least one mask")]
    NoMasks,
    #[error("sequence mismatch: {0}")]
    SequenceMismatch(String),
    #[error("mask for unknown actor {0}")]
    UnknownActor(String),
    #[error(transparent)]
    Render(#[from] RenderError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskInput {
    pub actor_id: String,
    pub frames: FrameSequenceRef,
    pub prompt: String,
    /// Handle of a user-supplied reference image. When absent the backend
    /// derives one from the prompts.
    pub reference_image: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobBundle {
    pub bundle_id: String,
    pub background: FrameSequenceRef,
    pub masks: Vec<MaskInput>,
    pub scene_prompt: String,
    pub sampling: SamplingConfig,
}

impl JobBundle {
    /// Hash of the bundle's content. Frame directories are identified by their
    /// manifests, so moving the files does not change the id.
    pub fn compute_id(&self) -> String {
        let canonical = json!({
            "background": self.background.manifest.content_hash(),
            "masks": self.masks.iter().map(|m| json!({
                "actor_id": m.actor_id,
                "frames": m.frames.manifest.content_hash(),
                "prompt": m.prompt,
                "reference_image": m.reference_image,
            })).collect::<Vec<_>>(),
            "scene_prompt": self.scene_prompt,
            "sampling": self.sampling,
        });
        sha256_hex(&serde_json::to_vec(&canonical).expect("bundle serializes"))
    }

    pub fn frame_count(&self) -> usize {
        self.background.len()
    }
}

fn check_sequence(what: &str, seq: &FrameSequenceRef, layout: ChannelLayout, bg: &FrameSequenceRef) -> Result<(), BundleError> {
    let (m, b) = (&seq.manifest, &bg.manifest);
    if m.channels != layout {
        return Err(BundleError::SequenceMismatch(format!("{what} has {:?} frames, expected {layout:?}", m.channels)));
    }
    if m.count != b.count || m.width != b.width || m.height != b.height || m.fps != b.fps {
        return Err(BundleError::SequenceMismatch(format!(
            "{what} is {} frames {}x{} @ {} fps, background is {} frames {}x{} @ {} fps",
            m.count, m.width, m.height, m.fps, b.count, b.width, b.height, b.fps
        )));
    }
    Ok(())
}

/// Assembles a bundle from already-rendered sequences. `masks` pairs actor ids
/// with their mask sequences, in the order they should be generated.
pub fn build_bundle(
    scene: &Scene,
    background: FrameSequenceRef,
    masks: Vec<(String, FrameSequenceRef)>,
) -> Result<JobBundle, BundleError> {
    if scene.scene_prompt.trim().is_empty() {
        return Err(BundleError::EmptyPrompt);
    }
    if masks.is_empty() {
        return Err(BundleError::NoMasks);
    }
    if background.manifest.channels != ChannelLayout::Rgb {
        return Err(BundleError::SequenceMismatch("background must be RGB".into()));
    }
    let mut inputs = Vec::with_capacity(masks.len());
    for (actor_id, frames) in masks {
        check_sequence(&format!("mask {actor_id}"), &frames, ChannelLayout::Rgba, &background)?;
        let actor = scene
            .actors
            .iter()
            .find(|a| a.id.0 == actor_id)
            .ok_or_else(|| BundleError::UnknownActor(actor_id.clone()))?;
        inputs.push(MaskInput {
            actor_id,
            frames,
            prompt: actor.prompt.clone(),
            reference_image: actor.reference_image.clone(),
        });
    }
    let mut sampling = default_sampling();
    sampling.extend(scene.sampling.iter().map(|(k, v)| (k.clone(), v.clone())));
    let mut bundle = JobBundle {
        bundle_id: String::new(),
        background,
        masks: inputs,
        scene_prompt: scene.scene_prompt.clone(),
        sampling,
    };
    bundle.bundle_id = bundle.compute_id();
    Ok(bundle)
}

/// Renders the scene's background and masks under `dir` (`background/` and
/// `masks/<index>/`) and bundles them.
pub fn stage_bundle(scene: &Scene, pano: &Panorama, dir: &Path, mask_color: [u8; 3]) -> Result<JobBundle, BundleError> {
    if scene.scene_prompt.trim().is_empty() {
        return Err(BundleError::EmptyPrompt);
    }
    if scene.actors.is_empty() {
        return Err(BundleError::NoMasks);
    }
    let background = render_background(scene, pano)?.write_dir(&dir.join("background")).map_err(RenderError::from)?;
    let mut masks = Vec::new();
    for (i, (id, seq)) in render_masks_with_color(scene, mask_color)?.into_iter().enumerate() {
        let r = seq.write_dir(&dir.join("masks").join(i.to_string())).map_err(RenderError::from)?;
        masks.push((id.0, r));
    }
    build_bundle(scene, background, masks)
}

/// [`stage_bundle`] with the default green masks.
pub fn stage_default_bundle(scene: &Scene, pano: &Panorama, dir: &Path) -> Result<JobBundle, BundleError> {
    stage_bundle(scene, pano, dir, MASK_GREEN)
}
