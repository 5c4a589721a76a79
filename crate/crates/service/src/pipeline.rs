//! Scene to job: fetch the panorama, render the sequences, bundle them.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use thiserror::Error;

use streetstage_core::{validate_scene, Diagnostic, FrameSequenceRef, Panorama, Scene};
use streetstage_imagery::{ImageryClient, ImageryError};
use streetstage_jobs::{stage_default_bundle, BundleError, JobBundle};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("scene is invalid")]
    Invalid(Vec<Diagnostic>),
    #[error(transparent)]
    Imagery(#[from] ImageryError),
    #[error(transparent)]
    Bundle(#[from] BundleError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Frames(#[from] streetstage_core::frames::FrameError),
}

pub fn panorama_for(imagery: &ImageryClient, scene: &Scene) -> Result<Arc<Panorama>, ImageryError> {
    let node = imagery.node(&scene.node_id)?;
    imagery.fetch_panorama(&node)
}

/// Renders the scene's background and masks into `staging_root/<bundle id>`
/// and returns the bundle. Staging the same content twice reuses the first
/// directory.
pub fn stage_scene(imagery: &ImageryClient, scene: &Scene, staging_root: &Path) -> Result<JobBundle, PipelineError> {
    let diagnostics = validate_scene(scene);
    if !diagnostics.is_empty() {
        return Err(PipelineError::Invalid(diagnostics));
    }
    let pano = panorama_for(imagery, scene)?;
    fs::create_dir_all(staging_root)?;
    let tmp = staging_root.join(format!(".tmp-{}-{}", std::process::id(), streetstage_jobs::queue::now_ms()));
    let bundle = stage_default_bundle(scene, &pano, &tmp)?;
    let target = staging_root.join(&bundle.bundle_id);
    if target.exists() {
        fs::remove_dir_all(&tmp)?;
    } else {
        fs::rename(&tmp, &target)?;
    }
    relocate(bundle, &target)
}

/// Points the bundle's sequences at `dir`, checking the frames there match.
fn relocate(mut bundle: JobBundle, dir: &Path) -> Result<JobBundle, PipelineError> {
    bundle.background = FrameSequenceRef::open(&dir.join("background"))?;
    for (i, m) in bundle.masks.iter_mut().enumerate() {
        m.frames = FrameSequenceRef::open(&dir.join("masks").join(i.to_string()))?;
    }
    if bundle.compute_id() != bundle.bundle_id {
        return Err(PipelineError::Io(std::io::Error::other(format!(
            "staged frames in {} do not match the bundle",
            dir.display()
        ))));
    }
    Ok(bundle)
}

/// Copies a finished sequence (frames plus manifest) into `out`.
pub fn copy_sequence(seq: &FrameSequenceRef, out: &Path) -> Result<FrameSequenceRef, PipelineError> {
    fs::create_dir_all(out)?;
    fs::copy(seq.dir.join(streetstage_core::frames::MANIFEST_FILE), out.join(streetstage_core::frames::MANIFEST_FILE))?;
    for f in &seq.manifest.frames {
        fs::copy(seq.dir.join(&f.file), out.join(&f.file))?;
    }
    Ok(FrameSequenceRef::open(out)?)
}
