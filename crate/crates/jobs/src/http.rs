//! Client for a remote generation server.
//!
//! ```text
//! POST {base}/jobs               body: bundle archive (application/zip) -> {"job_id": ...}
//! GET  {base}/jobs/{id}          -> {"state": "pending|running|done|failed", "completed_masks": n, "error": ...}
//! GET  {base}/jobs/{id}/result   -> result archive (one frame directory)
//! ```
//!
//! Requests carry `Authorization: Bearer <token>` when a token is configured.

use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use streetstage_core::FrameSequenceRef;

use crate::archive::{extract, pack_bundle};
use crate::backend::{Backend, BackendError, MaskProgress};
use crate::bundle::JobBundle;

static HTTP_REQUESTS: AtomicU64 = AtomicU64::new(0);

/// Requests sent by every [`HttpBackend`] in this process.
pub fn http_requests() -> u64 {
    HTTP_REQUESTS.load(Ordering::Relaxed)
}

const MAX_RESULT_BYTES: u64 = 8 << 30;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubmitResponse {
    pub job_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteStatus {
    pub state: String,
    #[serde(default)]
    pub completed_masks: usize,
    #[serde(default)]
    pub error: Option<String>,
}

pub struct HttpBackend {
    agent: ureq::Agent,
    base_url: String,
    token: Option<String>,
    poll_interval: Duration,
}

type Response = ureq::http::Response<ureq::Body>;

impl HttpBackend {
    pub fn new(base_url: impl Into<String>, token: Option<String>) -> Self {
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(300)))
            .build()
            .new_agent();
        Self {
            agent,
            base_url: base_url.into().trim_end_matches('/').to_owned(),
            token,
            poll_interval: Duration::from_millis(500),
        }
    }

    pub fn with_poll_interval(mut self, interval: Duration) -> Self {
        self.poll_interval = interval;
        self
    }

    fn auth<B>(&self, req: ureq::RequestBuilder<B>) -> ureq::RequestBuilder<B> {
        match &self.token {
            Some(t) => req.header("Authorization", format!("Bearer {t}")),
            None => req,
        }
    }

    fn check(url: &str, resp: Result<Response, ureq::Error>) -> Result<Response, BackendError> {
        let resp = resp.map_err(|e| BackendError::Unreachable(format!("{url}: {e}")))?;
        match resp.status().as_u16() {
            200..=299 => Ok(resp),
            s @ (502..=504 | 429) => Err(BackendError::Unreachable(format!("{url} returned HTTP {s}"))),
            s => Err(BackendError::Protocol(format!("{url} returned HTTP {s}"))),
        }
    }

    fn get(&self, url: &str) -> Result<Response, BackendError> {
        HTTP_REQUESTS.fetch_add(1, Ordering::Relaxed);
        Self::check(url, self.auth(self.agent.get(url)).call())
    }

    fn json<T: serde::de::DeserializeOwned>(resp: Response) -> Result<T, BackendError> {
        let text = resp.into_body().read_to_string().map_err(|e| BackendError::Protocol(e.to_string()))?;
        serde_json::from_str(&text).map_err(|e| BackendError::Protocol(format!("{e}: {text}")))
    }

    pub fn status(&self, handle: &str) -> Result<RemoteStatus, BackendError> {
        Self::json(self.get(&format!("{}/jobs/{handle}", self.base_url))?)
    }
}

impl Backend for HttpBackend {
    fn name(&self) -> &str {
        "http"
    }

    fn submit(&self, bundle: &JobBundle) -> Result<String, BackendError> {
        let body = pack_bundle(bundle)?;
        let url = format!("{}/jobs", self.base_url);
        HTTP_REQUESTS.fetch_add(1, Ordering::Relaxed);
        let req = self.auth(self.agent.post(&url)).header("Content-Type", "application/zip");
        let resp = Self::check(&url, req.send(&body[..]))?;
        Ok(Self::json::<SubmitResponse>(resp)?.job_id)
    }

    fn run(
        &self,
        bundle: &JobBundle,
        handle: &str,
        out_dir: &Path,
        progress: &mut dyn FnMut(MaskProgress),
    ) -> Result<FrameSequenceRef, BackendError> {
        let n = bundle.masks.len();
        if n == 0 {
            return Err(BackendError::Protocol("bundle has no masks".into()));
        }
        // Masks reported as started or done so far.
        let (mut started, mut done) = (0usize, 0usize);
        loop {
            let status = self.status(handle)?;
            let completed = status.completed_masks.min(n);
            while done < completed {
                if started == done {
                    progress(MaskProgress::Started(done));
                    started += 1;
                }
                progress(MaskProgress::Done(done));
                done += 1;
            }
            match status.state.as_str() {
                "pending" => {}
                "running" | "failed" if started == done && done < n => {
                    progress(MaskProgress::Started(done));
                    started += 1;
                }
                _ => {}
            }
            match status.state.as_str() {
                "done" => {
                    if done != n {
                        return Err(BackendError::Protocol(format!("done after {done} of {n} masks")));
                    }
                    let url = format!("{}/jobs/{handle}/result", self.base_url);
                    let bytes = self
                        .get(&url)?
                        .into_body()
                        .with_config()
                        .limit(MAX_RESULT_BYTES)
                        .read_to_vec()
                        .map_err(|e| BackendError::Unreachable(e.to_string()))?;
                    std::fs::create_dir_all(out_dir)?;
                    extract(&bytes, out_dir)?;
                    let out = FrameSequenceRef::open(out_dir)?;
                    if out.len() != bundle.frame_count() {
                        return Err(BackendError::Protocol(format!(
                            "result has {} frames, expected {}",
                            out.len(),
                            bundle.frame_count()
                        )));
                    }
                    return Ok(out);
                }
                "failed" => {
                    return Err(BackendError::MaskFailed {
                        index: done.min(n - 1),
                        reason: status.error.unwrap_or_else(|| "backend reported failure".into()),
                    })
                }
                "pending" | "running" => std::thread::sleep(self.poll_interval),
                other => return Err(BackendError::Protocol(format!("unknown job state {other:?}"))),
            }
        }
    }
}
