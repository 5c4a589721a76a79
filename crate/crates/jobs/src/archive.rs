//! Zip archives used on the wire. A bundle archive holds `bundle.json` plus the
//! frame directories under `background/` and `masks/<i>/`; a result archive is
//! just one frame directory.

use std::fs;
use std::io::{Cursor, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use zip::write::SimpleFileOptions;
use zip::{CompressionMethod, ZipArchive, ZipWriter};

use streetstage_core::FrameSequenceRef;

use crate::backend::BackendError;
use crate::bundle::{JobBundle, MaskInput, SamplingConfig};

pub const BUNDLE_FILE: &str = "bundle.json";

#[derive(Debug, Serialize, Deserialize)]
struct WireMask {
    actor_id: String,
    prompt: String,
    reference_image: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct WireBundle {
    bundle_id: String,
    scene_prompt: String,
    sampling: SamplingConfig,
    masks: Vec<WireMask>,
}

fn zip_err(e: zip::result::ZipError) -> BackendError {
    BackendError::Protocol(format!("bad archive: {e}"))
}

fn add_dir(zip: &mut ZipWriter<Cursor<Vec<u8>>>, seq: &FrameSequenceRef, prefix: &str) -> Result<(), BackendError> {
    // PNGs are already compressed.
    let opts = SimpleFileOptions::default().compression_method(CompressionMethod::Stored);
    let mut files = vec![streetstage_core::frames::MANIFEST_FILE.to_owned()];
    files.extend(seq.manifest.frames.iter().map(|f| f.file.clone()));
    for file in files {
        let bytes = fs::read(seq.dir.join(&file))?;
        zip.start_file(format!("{prefix}{file}"), opts).map_err(zip_err)?;
        zip.write_all(&bytes)?;
    }
    Ok(())
}

/// Packs one frame directory.
pub fn pack_sequence(seq: &FrameSequenceRef) -> Result<Vec<u8>, BackendError> {
    let mut zip = ZipWriter::new(Cursor::new(Vec::new()));
    add_dir(&mut zip, seq, "")?;
    Ok(zip.finish().map_err(zip_err)?.into_inner())
}

pub fn pack_bundle(bundle: &JobBundle) -> Result<Vec<u8>, BackendError> {
    let wire = WireBundle {
        bundle_id: bundle.bundle_id.clone(),
        scene_prompt: bundle.scene_prompt.clone(),
        sampling: bundle.sampling.clone(),
        masks: bundle
            .masks
            .iter()
            .map(|m| WireMask {
                actor_id: m.actor_id.clone(),
                prompt: m.prompt.clone(),
                reference_image: m.reference_image.clone(),
            })
            .collect(),
    };
    let mut zip = ZipWriter::new(Cursor::new(Vec::new()));
    zip.start_file(BUNDLE_FILE, SimpleFileOptions::default()).map_err(zip_err)?;
    zip.write_all(&serde_json::to_vec_pretty(&wire).expect("bundle serializes"))?;
    add_dir(&mut zip, &bundle.background, "background/")?;
    for (i, m) in bundle.masks.iter().enumerate() {
        add_dir(&mut zip, &m.frames, &format!("masks/{i}/"))?;
    }
    Ok(zip.finish().map_err(zip_err)?.into_inner())
}

/// Extracts an archive into `dir`, refusing entries that would escape it.
pub fn extract(bytes: &[u8], dir: &Path) -> Result<(), BackendError> {
    let mut archive = ZipArchive::new(Cursor::new(bytes)).map_err(zip_err)?;
    for i in 0..archive.len() {
        let mut entry = archive.by_index(i).map_err(zip_err)?;
        let name = entry
            .enclosed_name()
            .ok_or_else(|| BackendError::Protocol(format!("unsafe archive path {}", entry.name())))?;
        let path = dir.join(name);
        if entry.is_dir() {
            fs::create_dir_all(&path)?;
            continue;
        }
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        let mut buf = Vec::with_capacity(entry.size() as usize);
        entry.read_to_end(&mut buf)?;
        fs::write(&path, buf)?;
    }
    Ok(())
}

/// Extracts a bundle archive into `dir` and checks its id against the content.
pub fn unpack_bundle(bytes: &[u8], dir: &Path) -> Result<JobBundle, BackendError> {
    extract(bytes, dir)?;
    let text = fs::read_to_string(dir.join(BUNDLE_FILE))?;
    let wire: WireBundle = serde_json::from_str(&text).map_err(|e| BackendError::Protocol(e.to_string()))?;
    let background = FrameSequenceRef::open(&dir.join("background"))?;
    let masks = wire
        .masks
        .into_iter()
        .enumerate()
        .map(|(i, m)| {
            Ok(MaskInput {
                actor_id: m.actor_id,
                frames: FrameSequenceRef::open(&dir.join("masks").join(i.to_string()))?,
                prompt: m.prompt,
                reference_image: m.reference_image,
            })
        })
        .collect::<Result<Vec<_>, BackendError>>()?;
    let bundle = JobBundle {
        bundle_id: wire.bundle_id,
        background,
        masks,
        scene_prompt: wire.scene_prompt,
        sampling: wire.sampling,
    };
    if bundle.compute_id() != bundle.bundle_id {
        return Err(BackendError::Protocol("bundle id does not match its content".into()));
    }
    Ok(bundle)
}
