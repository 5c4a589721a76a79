use std::path::Path;

use thiserror::Error;

use streetstage_core::frames::FrameError;
use streetstage_core::FrameSequenceRef;

use crate::bundle::JobBundle;

#[derive(Debug, Error)]
pub enum BackendError {
    /// The backend could not be reached; the queue retries these.
    #[error("backend unreachable: {0}")]
    Unreachable(String),
    #[error("mask {index} failed: {reason}")]
    MaskFailed { index: usize, reason: String },
    #[error("backend protocol error: {0}")]
    Protocol(String),
    #[error(transparent)]
    Frames(#[from] FrameError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl BackendError {
    pub fn is_retriable(&self) -> bool {
        matches!(self, BackendError::Unreachable(_))
    }
}

/// Progress of the per-mask sub-jobs, reported in order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MaskProgress {
    Started(usize),
    Done(usize),
}

/// A generation backend. Jobs are handed over with [`Backend::submit`] and then
/// driven to completion with [`Backend::run`], which writes the result frames
/// into `out_dir`.
pub trait Backend: Send + Sync {
    fn name(&self) -> &str;

    /// Hands the bundle to the backend and returns its handle for the job.
    fn submit(&self, bundle: &JobBundle) -> Result<String, BackendError>;

    fn run(
        &self,
        bundle: &JobBundle,
        handle: &str,
        out_dir: &Path,
        progress: &mut dyn FnMut(MaskProgress),
    ) -> Result<FrameSequenceRef, BackendError>;
}
