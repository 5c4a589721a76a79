//! The persistent render queue.
//!
//! One owner thread serializes every change: it stamps each [`JobEvent`],
//! appends it to `events.jsonl`, then applies it to the shared [`QueueState`].
//! Readers only take snapshots. A single worker thread runs jobs one at a time
//! in submission order. Opening a queue replays its log; jobs that were running
//! are resumed from their first mask and pending ones are picked up as usual.

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::sync::{Arc, RwLock};
use std::thread::JoinHandle;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use thiserror::Error;

use crate::backend::{Backend, BackendError, MaskProgress};
use crate::bundle::JobBundle;
use crate::state::{JobEvent, JobState, LoggedEvent, QueueState, RenderJob, TransitionError, MAX_ATTEMPTS};

pub const EVENTS_FILE: &str = "events.jsonl";
pub const RESULTS_DIR: &str = "results";

#[derive(Debug, Error)]
pub enum QueueError {
    #[error("io error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("event log line {line}: {reason}")]
    Corrupt { line: usize, reason: String },
    #[error(transparent)]
    Transition(#[from] TransitionError),
    #[error("queue has shut down")]
    Closed,
}

#[derive(Debug, Clone)]
pub struct QueueConfig {
    pub dir: PathBuf,
    /// Delay before the second attempt; doubles with each further attempt.
    pub backoff_base: Duration,
    pub backoff_max: Duration,
}

impl QueueConfig {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into(), backoff_base: Duration::from_secs(1), backoff_max: Duration::from_secs(60) }
    }

    pub fn with_backoff(mut self, base: Duration, max: Duration) -> Self {
        self.backoff_base = base;
        self.backoff_max = max;
        self
    }

    /// Wait after failed attempt number `attempt` (1-based).
    pub fn backoff(&self, attempt: u32) -> Duration {
        let factor = 1u32 << (attempt.saturating_sub(1)).min(16);
        self.backoff_base.saturating_mul(factor).min(self.backoff_max)
    }
}

pub fn now_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis() as u64)
}

/// The id a bundle's job gets.
pub fn job_id_for(bundle: &JobBundle) -> String {
    format!("job-{}", &bundle.bundle_id[..16.min(bundle.bundle_id.len())])
}

/// Reads a log. A final line cut short by a crash is dropped with a warning;
/// anything else unreadable is an error.
pub fn read_log(path: &Path) -> Result<Vec<LoggedEvent>, QueueError> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(source) => return Err(QueueError::Io { path: path.to_owned(), source }),
    };
    let lines: Vec<String> = BufReader::new(file)
        .lines()
        .collect::<Result<_, _>>()
        .map_err(|source| QueueError::Io { path: path.to_owned(), source })?;
    let mut events = Vec::with_capacity(lines.len());
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<LoggedEvent>(line) {
            Ok(e) => events.push(e),
            Err(e) if i + 1 == lines.len() => {
                tracing::warn!("ignoring truncated last event in {}: {e}", path.display());
            }
            Err(e) => return Err(QueueError::Corrupt { line: i + 1, reason: e.to_string() }),
        }
    }
    Ok(events)
}

/// Rebuilds queue state from a log.
pub fn replay(events: &[LoggedEvent]) -> Result<QueueState, QueueError> {
    let mut state = QueueState::default();
    for (i, e) in events.iter().enumerate() {
        state.apply(e).map_err(|err| QueueError::Corrupt { line: i + 1, reason: err.to_string() })?;
    }
    Ok(state)
}

enum Command {
    Submit(JobBundle, Sender<Result<String, QueueError>>),
    Record(JobEvent, Sender<Result<(), QueueError>>),
    Shutdown,
}

struct Owner {
    state: Arc<RwLock<QueueState>>,
    log: File,
    log_path: PathBuf,
    wake: Sender<()>,
}

impl Owner {
    fn record(&mut self, event: JobEvent) -> Result<(), QueueError> {
        let logged = {
            let state = self.state.read().expect("queue state lock");
            let logged = LoggedEvent { seq: state.last_seq + 1, at_ms: now_ms(), event };
            // Check legality on a copy before anything reaches the log.
            match &logged.event {
                JobEvent::Submitted { job_id, .. } if state.jobs.contains_key(job_id) => {
                    return Err(TransitionError::DuplicateJob(job_id.clone()).into());
                }
                JobEvent::Submitted { .. } => {}
                other => {
                    let mut job = state
                        .get(other.job_id())
                        .cloned()
                        .ok_or_else(|| TransitionError::UnknownJob(other.job_id().to_owned()))?;
                    job.apply(other, logged.at_ms)?;
                }
            }
            logged
        };
        let mut line = serde_json::to_vec(&logged).expect("event serializes");
        line.push(b'\n');
        self.log
            .write_all(&line)
            .and_then(|_| self.log.sync_data())
            .map_err(|source| QueueError::Io { path: self.log_path.clone(), source })?;
        self.state.write().expect("queue state lock").apply(&logged)?;
        Ok(())
    }

    fn submit(&mut self, bundle: JobBundle) -> Result<String, QueueError> {
        if let Some(id) = self.state.read().expect("queue state lock").by_bundle.get(&bundle.bundle_id) {
            return Ok(id.clone());
        }
        let job_id = job_id_for(&bundle);
        self.record(JobEvent::Submitted { job_id: job_id.clone(), bundle })?;
        let _ = self.wake.send(());
        Ok(job_id)
    }

    fn run(mut self, rx: Receiver<Command>) {
        for cmd in rx {
            match cmd {
                Command::Submit(bundle, reply) => {
                    let _ = reply.send(self.submit(bundle));
                }
                Command::Record(event, reply) => {
                    let _ = reply.send(self.record(event));
                }
                Command::Shutdown => break,
            }
        }
    }
}

/// Handle used by the worker to send events through the owner.
#[derive(Clone)]
struct Recorder(Sender<Command>);

impl Recorder {
    fn record(&self, event: JobEvent) -> Result<(), QueueError> {
        let (tx, rx) = mpsc::channel();
        self.0.send(Command::Record(event, tx)).map_err(|_| QueueError::Closed)?;
        rx.recv().map_err(|_| QueueError::Closed)?
    }
}

pub struct RenderQueue {
    config: QueueConfig,
    state: Arc<RwLock<QueueState>>,
    commands: Sender<Command>,
    owner: Option<JoinHandle<()>>,
    worker: Option<JoinHandle<()>>,
}

impl RenderQueue {
    /// Opens (or creates) the queue in `config.dir` and starts its worker.
    pub fn open(config: QueueConfig, backend: Arc<dyn Backend>) -> Result<Self, QueueError> {
        let io = |path: &Path| {
            let path = path.to_owned();
            move |source| QueueError::Io { path, source }
        };
        fs::create_dir_all(config.dir.join(RESULTS_DIR)).map_err(io(&config.dir))?;
        let log_path = config.dir.join(EVENTS_FILE);
        let events = read_log(&log_path)?;
        let state = replay(&events)?;
        // Rewrite without a truncated tail so new events start on a fresh line.
        let mut text = Vec::new();
        for e in &events {
            text.extend(serde_json::to_vec(e).expect("event serializes"));
            text.push(b'\n');
        }
        let tmp = config.dir.join(format!("{EVENTS_FILE}.tmp"));
        fs::write(&tmp, &text).and_then(|_| fs::rename(&tmp, &log_path)).map_err(io(&log_path))?;
        let log = OpenOptions::new().append(true).open(&log_path).map_err(io(&log_path))?;

        let resume: Vec<String> =
            state.list().iter().filter(|j| j.state == JobState::Running).map(|j| j.job_id.clone()).collect();
        let state = Arc::new(RwLock::new(state));
        let (commands, rx) = mpsc::channel();
        let (wake_tx, wake_rx) = mpsc::channel();
        let owner = Owner { state: state.clone(), log, log_path, wake: wake_tx };
        let owner = std::thread::Builder::new()
            .name("queue-owner".into())
            .spawn(move || owner.run(rx))
            .map_err(io(&config.dir))?;
        let worker = Worker {
            config: config.clone(),
            state: state.clone(),
            recorder: Recorder(commands.clone()),
            backend,
            wake: wake_rx,
        };
        let worker = std::thread::Builder::new()
            .name("queue-worker".into())
            .spawn(move || worker.run(resume))
            .map_err(io(&config.dir))?;
        Ok(Self { config, state, commands, owner: Some(owner), worker: Some(worker) })
    }

    /// Enqueues a bundle. Submitting the same bundle again returns the
    /// existing job instead of adding a new one.
    pub fn submit(&self, bundle: JobBundle) -> Result<String, QueueError> {
        let (tx, rx) = mpsc::channel();
        self.commands.send(Command::Submit(bundle, tx)).map_err(|_| QueueError::Closed)?;
        rx.recv().map_err(|_| QueueError::Closed)?
    }

    pub fn poll(&self, job_id: &str) -> Option<RenderJob> {
        self.state.read().expect("queue state lock").get(job_id).cloned()
    }

    /// All jobs in submission order.
    pub fn jobs(&self) -> Vec<RenderJob> {
        self.state.read().expect("queue state lock").list().into_iter().cloned().collect()
    }

    /// Blocks until the job finishes or `timeout` passes, returning the last snapshot.
    pub fn wait(&self, job_id: &str, timeout: Duration) -> Option<RenderJob> {
        let deadline = std::time::Instant::now() + timeout;
        loop {
            let job = self.poll(job_id)?;
            if job.state.is_terminal() || std::time::Instant::now() >= deadline {
                return Some(job);
            }
            std::thread::sleep(Duration::from_millis(10));
        }
    }

    pub fn dir(&self) -> &Path {
        &self.config.dir
    }

    pub fn events(&self) -> Result<Vec<LoggedEvent>, QueueError> {
        read_log(&self.config.dir.join(EVENTS_FILE))
    }

    /// Stops accepting events and waits for the running job to end. The job's
    /// remaining events are dropped, as if the process had died.
    pub fn shutdown(mut self) {
        self.stop(true);
    }

    fn stop(&mut self, join_worker: bool) {
        let _ = self.commands.send(Command::Shutdown);
        if let Some(h) = self.owner.take() {
            let _ = h.join();
        }
        if let Some(h) = self.worker.take() {
            if join_worker {
                let _ = h.join();
            }
        }
    }
}

impl Drop for RenderQueue {
    fn drop(&mut self) {
        self.stop(false);
    }
}

struct Worker {
    config: QueueConfig,
    state: Arc<RwLock<QueueState>>,
    recorder: Recorder,
    backend: Arc<dyn Backend>,
    wake: Receiver<()>,
}

enum Next {
    Run(Box<RenderJob>),
    WaitUntil(u64),
    Idle,
}

impl Worker {
    /// The oldest unfinished job. Jobs are never overtaken, even while the
    /// oldest one is waiting out a backoff.
    fn next(&self) -> Next {
        let state = self.state.read().expect("queue state lock");
        match state.list().into_iter().find(|j| j.state == JobState::Pending) {
            Some(job) if job.not_before_ms > now_ms() => Next::WaitUntil(job.not_before_ms),
            Some(job) => Next::Run(Box::new(job.clone())),
            None => Next::Idle,
        }
    }

    fn run(self, resume: Vec<String>) {
        for id in resume {
            let job = self.state.read().expect("queue state lock").get(&id).cloned();
            if let Some(job) = job {
                if self.resume(&job).is_err() {
                    return;
                }
            }
        }
        loop {
            let wait = match self.next() {
                Next::Run(job) => {
                    if self.attempt(&job).is_err() {
                        return;
                    }
                    continue;
                }
                Next::WaitUntil(t) => Duration::from_millis(t.saturating_sub(now_ms())),
                Next::Idle => Duration::from_secs(3600),
            };
            match self.wake.recv_timeout(wait) {
                Ok(()) | Err(RecvTimeoutError::Timeout) => {}
                Err(RecvTimeoutError::Disconnected) => return,
            }
        }
    }

    /// One submission attempt for a pending job. Errors only when the queue is closed.
    fn attempt(&self, job: &RenderJob) -> Result<(), QueueError> {
        let id = job.job_id.clone();
        let attempt = job.attempts + 1;
        match self.backend.submit(&job.bundle) {
            Ok(handle) => {
                self.recorder.record(JobEvent::Started { job_id: id, attempt })?;
                self.execute(job, &handle)
            }
            Err(e) if e.is_retriable() && attempt < MAX_ATTEMPTS => {
                let wait = self.config.backoff(attempt);
                tracing::warn!("{id}: attempt {attempt} failed ({e}), retrying in {wait:?}");
                self.recorder.record(JobEvent::RetryScheduled {
                    job_id: id,
                    attempt,
                    error: e.to_string(),
                    not_before_ms: now_ms() + wait.as_millis() as u64,
                })
            }
            Err(e) => {
                let error = if e.is_retriable() { format!("gave up after {attempt} attempts: {e}") } else { e.to_string() };
                self.recorder.record(JobEvent::Failed { job_id: id, error })
            }
        }
    }

    /// Restarts a job that was running when the queue last stopped.
    fn resume(&self, job: &RenderJob) -> Result<(), QueueError> {
        let id = job.job_id.clone();
        tracing::info!("{id}: resuming after restart");
        self.recorder.record(JobEvent::Resumed { job_id: id.clone() })?;
        let mut last = None;
        for attempt in 1..=MAX_ATTEMPTS {
            match self.backend.submit(&job.bundle) {
                Ok(handle) => return self.execute(job, &handle),
                Err(e) if e.is_retriable() => {
                    if attempt < MAX_ATTEMPTS {
                        std::thread::sleep(self.config.backoff(attempt));
                    }
                    last = Some(e);
                }
                Err(e) => {
                    last = Some(e);
                    break;
                }
            }
        }
        let error = last.map_or_else(|| "resume failed".into(), |e| e.to_string());
        self.recorder.record(JobEvent::Failed { job_id: id, error })
    }

    fn execute(&self, job: &RenderJob, handle: &str) -> Result<(), QueueError> {
        let id = job.job_id.clone();
        let out_dir = self.config.dir.join(RESULTS_DIR).join(&id);
        if out_dir.exists() {
            let _ = fs::remove_dir_all(&out_dir);
        }
        let mut running = None;
        let mut closed = None;
        let result = self.backend.run(&job.bundle, handle, &out_dir, &mut |p| {
            let event = match p {
                MaskProgress::Started(index) => {
                    running = Some(index);
                    JobEvent::MaskStarted { job_id: id.clone(), index }
                }
                MaskProgress::Done(index) => {
                    running = None;
                    JobEvent::MaskDone { job_id: id.clone(), index }
                }
            };
            if closed.is_none() {
                if let Err(e) = self.recorder.record(event) {
                    closed = Some(e);
                }
            }
        });
        if let Some(e) = closed {
            return Err(e);
        }
        match result {
            Ok(result) => self.recorder.record(JobEvent::Completed { job_id: id, result }),
            Err(e) => {
                let index = match &e {
                    BackendError::MaskFailed { index, .. } => Some(*index),
                    _ => running,
                };
                if let Some(index) = index.filter(|i| running == Some(*i)) {
                    self.recorder.record(JobEvent::MaskFailed { job_id: id.clone(), index, error: e.to_string() })?;
                }
                self.recorder.record(JobEvent::Failed { job_id: id, error: e.to_string() })
            }
        }
    }
}
