//! Generation jobs: the bundle handed to a backend, the persistent queue that
//! runs jobs one at a time, and the mock and HTTP backends.

pub mod archive;
pub mod backend;
pub mod bundle;
pub mod http;
pub mod mock;
pub mod queue;
pub mod state;

pub use backend::{Backend, BackendError, MaskProgress};
pub use bundle::{
    build_bundle, default_sampling, stage_bundle, stage_default_bundle, BundleError, JobBundle, MaskInput,
    SamplingConfig,
};
pub use http::{http_requests, HttpBackend, RemoteStatus};
pub use mock::MockBackend;
pub use queue::{job_id_for, QueueConfig, QueueError, RenderQueue};
pub use state::{JobEvent, JobState, LoggedEvent, MaskState, QueueState, RenderJob, TransitionError, MAX_ATTEMPTS};
