//! The HTTP API and command-line front end over the staging engine.

pub mod api;
pub mod cli;
pub mod config;
pub mod pipeline;
pub mod projects;

pub use api::{router, AppState, JobView, Problem};
pub use cli::{app_state, run, Cli};
pub use config::Config;
