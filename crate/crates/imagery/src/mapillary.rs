//! Live provider speaking the Mapillary Graph API.

use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Duration;

use serde::Deserialize;

use crate::{BBox, ImageryError, ImageryNode, ImageryProvider, NodeRecord};

/// Environment variable holding the client token.
pub const MAPILLARY_TOKEN_ENV: &str = "STREETSTAGE_MAPILLARY_TOKEN";

pub const DEFAULT_BASE_URL: &str = "https://graph.mapillary.com";

const FIELDS: &str = "id,geometry,compass_angle,is_pano,captured_at,thumb_1024_url,thumb_original_url,width,height";
const MAX_IMAGE_BYTES: u64 = 512 * 1024 * 1024;

static NETWORK_REQUESTS: AtomicU64 = AtomicU64::new(0);

/// Requests issued by every live provider in this process.
pub fn network_requests() -> u64 {
    NETWORK_REQUESTS.load(Ordering::Relaxed)
}

#[derive(Debug, Deserialize)]
struct Geometry {
    coordinates: [f64; 2],
}

#[derive(Debug, Deserialize)]
struct ApiImage {
    id: String,
    geometry: Option<Geometry>,
    compass_angle: Option<f64>,
    #[serde(default)]
    is_pano: bool,
    captured_at: Option<i64>,
    thumb_1024_url: Option<String>,
    thumb_original_url: Option<String>,
    width: Option<u32>,
    height: Option<u32>,
}

impl ApiImage {
    fn into_node(self) -> Result<ImageryNode, ImageryError> {
        let Some(geometry) = self.geometry else {
            return Err(ImageryError::Malformed(format!("image {} has no geometry", self.id)));
        };
        let [lon, lat] = geometry.coordinates;
        NodeRecord {
            id: self.id,
            lat_deg: lat,
            lon_deg: lon,
            compass_deg: self.compass_angle,
            is_pano: self.is_pano,
            captured_at_ms: self.captured_at.unwrap_or(0),
            thumbnail_url: self.thumb_1024_url,
            full_url: self.thumb_original_url,
            width: self.width,
            height: self.height,
        }
        .into_node()
    }
}

#[derive(Debug, Deserialize)]
struct SearchResponse {
    data: Vec<ApiImage>,
}

/// Parses the body of an image search response.
pub fn parse_search_response(body: &str) -> Result<Vec<ImageryNode>, ImageryError> {
    let resp: SearchResponse = serde_json::from_str(body).map_err(|e| ImageryError::Malformed(e.to_string()))?;
    resp.data.into_iter().map(ApiImage::into_node).collect()
}

pub struct MapillaryProvider {
    agent: ureq::Agent,
    base_url: String,
    token: String,
}

impl MapillaryProvider {
    pub fn new(base_url: impl Into<String>, token: impl Into<String>) -> Self {
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(60)))
            .build()
            .new_agent();
        Self { agent, base_url: base_url.into().trim_end_matches('/').to_owned(), token: token.into() }
    }

    /// Reads the token from [`MAPILLARY_TOKEN_ENV`].
    pub fn from_env(base_url: Option<&str>) -> Result<Self, ImageryError> {
        let token = std::env::var(MAPILLARY_TOKEN_ENV)
            .map_err(|_| ImageryError::ProviderUnavailable(format!("{MAPILLARY_TOKEN_ENV} is not set")))?;
        Ok(Self::new(base_url.unwrap_or(DEFAULT_BASE_URL), token))
    }

    fn get(&self, url: &str, query: &[(&str, String)]) -> Result<ureq::http::Response<ureq::Body>, ImageryError> {
        NETWORK_REQUESTS.fetch_add(1, Ordering::Relaxed);
        let mut req = self.agent.get(url).header("Authorization", format!("OAuth {}", self.token));
        for (k, v) in query {
            req = req.query(*k, v);
        }
        let resp = req.call().map_err(|e| ImageryError::ProviderUnavailable(e.to_string()))?;
        match resp.status().as_u16() {
            200..=299 => Ok(resp),
            404 => Err(ImageryError::NotFound(url.to_owned())),
            429 => Err(ImageryError::QuotaExceeded),
            401 | 403 => Err(ImageryError::ProviderUnavailable(format!("authorization rejected ({})", resp.status()))),
            s => Err(ImageryError::ProviderUnavailable(format!("{url} returned HTTP {s}"))),
        }
    }

    fn read_text(resp: ureq::http::Response<ureq::Body>) -> Result<String, ImageryError> {
        resp.into_body().read_to_string().map_err(|e| ImageryError::ProviderUnavailable(e.to_string()))
    }
}

impl ImageryProvider for MapillaryProvider {
    fn name(&self) -> &str {
        "mapillary"
    }

    fn max_limit(&self) -> usize {
        2_000
    }

    fn search(&self, bbox: &BBox, limit: usize) -> Result<Vec<ImageryNode>, ImageryError> {
        let url = format!("{}/images", self.base_url);
        let resp = self.get(
            &url,
            &[("bbox", bbox.to_query()), ("limit", limit.to_string()), ("fields", FIELDS.to_owned())],
        )?;
        parse_search_response(&Self::read_text(resp)?)
    }

    fn node(&self, node_id: &str) -> Result<ImageryNode, ImageryError> {
        if node_id.is_empty() || !node_id.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'_' || b == b'-') {
            return Err(ImageryError::NotFound(node_id.to_owned()));
        }
        let url = format!("{}/{node_id}", self.base_url);
        let text = Self::read_text(self.get(&url, &[("fields", FIELDS.to_owned())])?)?;
        let image: ApiImage = serde_json::from_str(&text).map_err(|e| ImageryError::Malformed(e.to_string()))?;
        image.into_node()
    }

    fn fetch_bytes(&self, node: &ImageryNode) -> Result<Vec<u8>, ImageryError> {
        let url = node
            .full_url
            .as_deref()
            .ok_or_else(|| ImageryError::Malformed(format!("node {} has no image URL", node.node_id)))?;
        let resp = self.get(url, &[])?;
        resp.into_body()
            .with_config()
            .limit(MAX_IMAGE_BYTES)
            .read_to_vec()
            .map_err(|e| ImageryError::ProviderUnavailable(e.to_string()))
    }
}
