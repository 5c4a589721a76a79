//! `streetstage.toml`. Every field has a default, so an empty file (or none at
//! all) gives a fully offline setup: fixture imagery and the mock backend.
//!
//! ```toml
//! data_dir = ".streetstage"
//!
//! [imagery]
//! provider = "mapillary"          # or "fixture"
//! token = "MLY|..."               # falls back to STREETSTAGE_MAPILLARY_TOKEN
//! cache_budget_bytes = 2147483648
//!
//! [backend]
//! kind = "http"                   # or "mock"
//! url = "http://gpu-box:8188"
//! token = "..."
//!
//! [server]
//! bind = "127.0.0.1:8080"
//! ui_dir = "web-ui/dist"
//! ```

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

use streetstage_imagery::{
    DiskCache, FixtureProvider, ImageryClient, ImageryProvider, MapillaryProvider, DEFAULT_BASE_URL,
    DEFAULT_CACHE_BUDGET_BYTES, MAPILLARY_TOKEN_ENV,
};
use streetstage_jobs::{Backend, HttpBackend, MockBackend};

pub const DEFAULT_CONFIG_FILE: &str = "streetstage.toml";
pub const BACKEND_TOKEN_ENV: &str = "STREETSTAGE_BACKEND_TOKEN";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    Fixture,
    Mapillary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Mock,
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImageryConfig {
    pub provider: ProviderKind,
    pub fixture_dir: PathBuf,
    pub base_url: String,
    pub token: Option<String>,
    /// Defaults to `<data_dir>/cache`.
    pub cache_dir: Option<PathBuf>,
    pub cache_budget_bytes: u64,
}

impl Default for ImageryConfig {
    fn default() -> Self {
        Self {
            provider: ProviderKind::Fixture,
            fixture_dir: PathBuf::from("fixtures/imagery"),
            base_url: DEFAULT_BASE_URL.to_owned(),
            token: None,
            cache_dir: None,
            cache_budget_bytes: DEFAULT_CACHE_BUDGET_BYTES,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendConfig {
    pub kind: BackendKind,
    pub url: Option<String>,
    pub token: Option<String>,
    /// Simulated time per mask for the mock backend.
    pub mock_latency_ms: u64,
    pub poll_interval_ms: u64,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self { kind: BackendKind::Mock, url: None, token: None, mock_latency_ms: 0, poll_interval_ms: 500 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServerConfig {
    pub bind: String,
    pub ui_dir: Option<PathBuf>,
    /// Map tile URL template handed to the UI.
    pub tile_url: String,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self {
            bind: "127.0.0.1:8080".into(),
            ui_dir: Some(PathBuf::from("web-ui/dist")),
            tile_url: "https://tile.openstreetmap.org/{z}/{x}/{y}.png".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub data_dir: PathBuf,
    pub imagery: ImageryConfig,
    pub backend: BackendConfig,
    pub server: ServerConfig,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            data_dir: PathBuf::from(".streetstage"),
            imagery: ImageryConfig::default(),
            backend: BackendConfig::default(),
            server: ServerConfig::default(),
        }
    }
}

impl Config {
    pub fn parse(text: &str) -> anyhow::Result<Self> {
        Ok(toml::from_str(text)?)
    }

    /// Reads `path`, or `streetstage.toml` in the working directory if it
    /// exists, or falls back to the defaults.
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let path = match path {
            Some(p) => p.to_owned(),
            None if Path::new(DEFAULT_CONFIG_FILE).exists() => PathBuf::from(DEFAULT_CONFIG_FILE),
            None => return Ok(Self::default()),
        };
        let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn queue_dir(&self) -> PathBuf {
        self.data_dir.join("queue")
    }

    pub fn staging_dir(&self) -> PathBuf {
        self.data_dir.join("staging")
    }

    pub fn projects_dir(&self) -> PathBuf {
        self.data_dir.join("projects")
    }

    pub fn cache_dir(&self) -> PathBuf {
        self.imagery.cache_dir.clone().unwrap_or_else(|| self.data_dir.join("cache"))
    }

    pub fn imagery_client(&self) -> anyhow::Result<ImageryClient> {
        let provider: Arc<dyn ImageryProvider> = match self.imagery.provider {
            ProviderKind::Fixture => Arc::new(
                FixtureProvider::open(&self.imagery.fixture_dir)
                    .with_context(|| format!("opening fixture imagery in {}", self.imagery.fixture_dir.display()))?,
            ),
            ProviderKind::Mapillary => {
                let token = match &self.imagery.token {
                    Some(t) => t.clone(),
                    None => std::env::var(MAPILLARY_TOKEN_ENV)
                        .with_context(|| format!("no imagery token in the config and {MAPILLARY_TOKEN_ENV} is not set"))?,
                };
                Arc::new(MapillaryProvider::new(&self.imagery.base_url, token))
            }
        };
        // Fixtures are already on disk; caching them again would only waste space.
        let cache = match self.imagery.provider {
            ProviderKind::Fixture => None,
            ProviderKind::Mapillary => Some(DiskCache::open(self.cache_dir(), self.imagery.cache_budget_bytes)?),
        };
        Ok(ImageryClient::new(provider, cache))
    }

    pub fn backend(&self) -> anyhow::Result<Arc<dyn Backend>> {
        Ok(match self.backend.kind {
            BackendKind::Mock => Arc::new(MockBackend::new(Duration::from_millis(self.backend.mock_latency_ms))),
            BackendKind::Http => {
                let Some(url) = &self.backend.url else {
                    bail!("backend.kind is http but backend.url is not set");
                };
                let token = self.backend.token.clone().or_else(|| std::env::var(BACKEND_TOKEN_ENV).ok());
                Arc::new(
                    HttpBackend::new(url, token)
                        .with_poll_interval(Duration::from_millis(self.backend.poll_interval_ms)),
                )
            }
        })
    }
}
