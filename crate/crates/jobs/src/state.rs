//! Render job lifecycle. Every change to a job is a [`JobEvent`]; the queue
//! applies the same events live and when replaying its log, so a reloaded
//! queue reaches exactly the state it had before.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use streetstage_core::FrameSequenceRef;

use crate::bundle::JobBundle;

/// Backend submission attempts before a job is given up.
pub const MAX_ATTEMPTS: u32 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobState {
    Pending,
    Running,
    Done,
    Failed,
}

impl JobState {
    pub fn is_terminal(self) -> bool {
        matches!(self, JobState::Done | JobState::Failed)
    }

    /// Whether a job may move from `self` to `next` (staying put is always allowed).
    pub fn may_become(self, next: JobState) -> bool {
        use JobState::*;
        self == next && !self.is_terminal()
            || matches!((self, next), (Pending, Running) | (Pending, Failed) | (Running, Done) | (Running, Failed))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskState {
    Pending,
    Running,
    Done,
    Failed,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskTiming {
    pub started_ms: Option<u64>,
    pub finished_ms: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderJob {
    pub job_id: String,
    pub bundle: JobBundle,
    pub state: JobState,
    pub masks: Vec<MaskState>,
    pub mask_timings: Vec<MaskTiming>,
    /// Backend submission attempts so far.
    pub attempts: u32,
    /// Earliest time (Unix ms) of the next attempt while pending.
    pub not_before_ms: u64,
    pub result: Option<FrameSequenceRef>,
    pub error: Option<String>,
    pub submitted_ms: u64,
    pub started_ms: Option<u64>,
    pub finished_ms: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum JobEvent {
    Submitted { job_id: String, bundle: JobBundle },
    RetryScheduled { job_id: String, attempt: u32, error: String, not_before_ms: u64 },
    Started { job_id: String, attempt: u32 },
    /// A running job picked up again after a restart; its masks start over.
    Resumed { job_id: String },
    MaskStarted { job_id: String, index: usize },
    MaskDone { job_id: String, index: usize },
    MaskFailed { job_id: String, index: usize, error: String },
    Completed { job_id: String, result: FrameSequenceRef },
    Failed { job_id: String, error: String },
}

impl JobEvent {
    pub fn job_id(&self) -> &str {
        match self {
            JobEvent::Submitted { job_id, .. }
            | JobEvent::RetryScheduled { job_id, .. }
            | JobEvent::Started { job_id, .. }
            | JobEvent::Resumed { job_id }
            | JobEvent::MaskStarted { job_id, .. }
            | JobEvent::MaskDone { job_id, .. }
            | JobEvent::MaskFailed { job_id, .. }
            | JobEvent::Completed { job_id, .. }
            | JobEvent::Failed { job_id, .. } => job_id,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            JobEvent::Submitted { .. } => "submitted",
            JobEvent::RetryScheduled { .. } => "retry_scheduled",
            JobEvent::Started { .. } => "started",
            JobEvent::Resumed { .. } => "resumed",
            JobEvent::MaskStarted { .. } => "mask_started",
            JobEvent::MaskDone { .. } => "mask_done",
            JobEvent::MaskFailed { .. } => "mask_failed",
            JobEvent::Completed { .. } => "completed",
            JobEvent::Failed { .. } => "failed",
        }
    }
}

/// An event as stored in the log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoggedEvent {
    pub seq: u64,
    pub at_ms: u64,
    pub event: JobEvent,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TransitionError {
    #[error("unknown job {0}")]
    UnknownJob(String),
    #[error("job {0} already exists")]
    DuplicateJob(String),
    #[error("job {job_id}: {event} is not allowed while {state:?}")]
    Illegal { job_id: String, state: JobState, event: &'static str },
    #[error("job {job_id}: {reason}")]
    Mask { job_id: String, reason: String },
}

impl RenderJob {
    pub fn new(job_id: String, bundle: JobBundle, at_ms: u64) -> Self {
        let n = bundle.masks.len();
        Self {
            job_id,
            bundle,
            state: JobState::Pending,
            masks: vec![MaskState::Pending; n],
            mask_timings: vec![MaskTiming::default(); n],
            attempts: 0,
            not_before_ms: 0,
            result: None,
            error: None,
            submitted_ms: at_ms,
            started_ms: None,
            finished_ms: None,
        }
    }

    fn illegal(&self, event: &JobEvent) -> TransitionError {
        TransitionError::Illegal { job_id: self.job_id.clone(), state: self.state, event: event.kind() }
    }

    fn mask_err(&self, reason: String) -> TransitionError {
        TransitionError::Mask { job_id: self.job_id.clone(), reason }
    }

    fn check_mask(&self, index: usize, want: MaskState) -> Result<(), TransitionError> {
        match self.masks.get(index) {
            None => Err(self.mask_err(format!("no mask {index}"))),
            Some(s) if *s != want => Err(self.mask_err(format!("mask {index} is {s:?}, expected {want:?}"))),
            Some(_) => Ok(()),
        }
    }

    /// Applies one event, or leaves the job untouched and explains why not.
    pub fn apply(&mut self, event: &JobEvent, at_ms: u64) -> Result<(), TransitionError> {
        use JobState::*;
        match (self.state, event) {
            (Pending, JobEvent::RetryScheduled { attempt, not_before_ms, error, .. }) => {
                if *attempt != self.attempts + 1 || *attempt >= MAX_ATTEMPTS {
                    return Err(self.mask_err(format!("retry attempt {attempt} after {} attempts", self.attempts)));
                }
                self.attempts = *attempt;
                self.not_before_ms = *not_before_ms;
                self.error = Some(error.clone());
            }
            (Pending, JobEvent::Started { attempt, .. }) => {
                if *attempt != self.attempts + 1 || *attempt > MAX_ATTEMPTS {
                    return Err(self.mask_err(format!("start attempt {attempt} after {} attempts", self.attempts)));
                }
                self.attempts = *attempt;
                self.state = Running;
                self.error = None;
                self.started_ms = Some(at_ms);
            }
            (Running, JobEvent::Resumed { .. }) => {
                self.masks.fill(MaskState::Pending);
                self.mask_timings.fill(MaskTiming::default());
            }
            (Running, JobEvent::MaskStarted { index, .. }) => {
                self.check_mask(*index, MaskState::Pending)?;
                if self.masks.contains(&MaskState::Running) {
                    return Err(self.mask_err("another mask is still running".into()));
                }
                if self.masks[..*index].iter().any(|m| *m != MaskState::Done) {
                    return Err(self.mask_err(format!("mask {index} started before earlier masks finished")));
                }
                self.masks[*index] = MaskState::Running;
                self.mask_timings[*index].started_ms = Some(at_ms);
            }
            (Running, JobEvent::MaskDone { index, .. }) => {
                self.check_mask(*index, MaskState::Running)?;
                self.masks[*index] = MaskState::Done;
                self.mask_timings[*index].finished_ms = Some(at_ms);
            }
            (Running, JobEvent::MaskFailed { index, error, .. }) => {
                self.check_mask(*index, MaskState::Running)?;
                self.masks[*index] = MaskState::Failed;
                self.mask_timings[*index].finished_ms = Some(at_ms);
                self.error = Some(error.clone());
            }
            (Running, JobEvent::Completed { result, .. }) => {
                if self.masks.iter().any(|m| *m != MaskState::Done) {
                    return Err(self.mask_err("completed before every mask was done".into()));
                }
                self.state = Done;
                self.result = Some(result.clone());
                self.finished_ms = Some(at_ms);
            }
            (Pending | Running, JobEvent::Failed { error, .. }) => {
                self.state = Failed;
                self.error = Some(error.clone());
                self.finished_ms = Some(at_ms);
            }
            _ => return Err(self.illegal(event)),
        }
        Ok(())
    }
}

/// All jobs, in submission order.
#[derive(Debug, Clone, Default)]
pub struct QueueState {
    pub jobs: BTreeMap<String, RenderJob>,
    pub order: Vec<String>,
    pub by_bundle: HashMap<String, String>,
    pub last_seq: u64,
}

impl QueueState {
    pub fn apply(&mut self, logged: &LoggedEvent) -> Result<(), TransitionError> {
        let at = logged.at_ms;
        match &logged.event {
            JobEvent::Submitted { job_id, bundle } => {
                if self.jobs.contains_key(job_id) {
                    return Err(TransitionError::DuplicateJob(job_id.clone()));
                }
                self.by_bundle.insert(bundle.bundle_id.clone(), job_id.clone());
                self.order.push(job_id.clone());
                self.jobs.insert(job_id.clone(), RenderJob::new(job_id.clone(), bundle.clone(), at));
            }
            other => {
                let job = self
                    .jobs
                    .get_mut(other.job_id())
                    .ok_or_else(|| TransitionError::UnknownJob(other.job_id().to_owned()))?;
                job.apply(other, at)?;
            }
        }
        self.last_seq = logged.seq;
        Ok(())
    }

    pub fn get(&self, job_id: &str) -> Option<&RenderJob> {
        self.jobs.get(job_id)
    }

    /// Jobs in submission order.
    pub fn list(&self) -> Vec<&RenderJob> {
        self.order.iter().filter_map(|id| self.jobs.get(id)).collect()
    }
}
