//! Street-level imagery: node discovery, panorama retrieval and a local cache.
//!
//! Providers only know how to talk to a source. [`ImageryClient`] adds the
//! contract on top: panoramic-only search results inside the query box, newest
//! first, and cached single-flight panorama fetches.

mod cache;
mod client;
mod fixture;
mod mapillary;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use streetstage_core::{GeoError, GeoPoint, PanoramaError};

pub use cache::{CacheStats, DiskCache, DEFAULT_CACHE_BUDGET_BYTES};
pub use client::{ClientStats, ImageryClient};
pub use fixture::FixtureProvider;
pub use mapillary::{network_requests, parse_search_response, MapillaryProvider, DEFAULT_BASE_URL, MAPILLARY_TOKEN_ENV};

#[derive(Debug, Error)]
pub enum ImageryError {
    #[error("imagery provider unavailable: {0}")]
    ProviderUnavailable(String),
    #[error("imagery provider quota exceeded")]
    QuotaExceeded,
    #[error("node {0} not found")]
    NotFound(String),
    #[error("node {0} is not a 360 degree panorama")]
    NotPanoramic(String),
    #[error("invalid bounding box: {0}")]
    InvalidBbox(String),
    #[error("limit {limit} exceeds the provider cap of {cap}")]
    LimitTooLarge { limit: usize, cap: usize },
    #[error("malformed provider record: {0}")]
    Malformed(String),
    #[error(transparent)]
    Decode(#[from] PanoramaError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl ImageryError {
    /// Whether retrying the same request later may succeed.
    pub fn is_retriable(&self) -> bool {
        matches!(self, ImageryError::ProviderUnavailable(_) | ImageryError::QuotaExceeded)
    }
}

impl From<GeoError> for ImageryError {
    fn from(e: GeoError) -> Self {
        ImageryError::Malformed(e.to_string())
    }
}

/// A capture location.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageryNode {
    pub node_id: String,
    pub position: GeoPoint,
    /// Compass angle of the image's first column, radians clockwise from north.
    pub compass_angle: f64,
    pub is_panoramic: bool,
    /// Milliseconds since the Unix epoch.
    pub capture_time: i64,
    pub thumbnail_url: Option<String>,
    pub full_url: Option<String>,
    pub width: Option<u32>,
    pub height: Option<u32>,
}

/// Wire and fixture form of [`ImageryNode`], with degrees instead of radians.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub id: String,
    pub lat_deg: f64,
    pub lon_deg: f64,
    /// Missing for some crowd-sourced captures; treated as 0 with a warning.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compass_deg: Option<f64>,
    pub is_pano: bool,
    pub captured_at_ms: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thumbnail_url: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub full_url: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub height: Option<u32>,
}

impl NodeRecord {
    pub fn into_node(self) -> Result<ImageryNode, ImageryError> {
        let position = GeoPoint::from_degrees(self.lat_deg, self.lon_deg)?;
        let compass = match self.compass_deg {
            Some(c) => c,
            None => {
                tracing::warn!(node = %self.id, "node has no compass angle, assuming 0");
                0.0
            }
        };
        Ok(ImageryNode {
            node_id: self.id,
            position,
            compass_angle: streetstage_core::geo::normalize_heading(compass.to_radians()),
            is_panoramic: self.is_pano,
            capture_time: self.captured_at_ms,
            thumbnail_url: self.thumbnail_url,
            full_url: self.full_url,
            width: self.width,
            height: self.height,
        })
    }
}

impl From<&ImageryNode> for NodeRecord {
    fn from(n: &ImageryNode) -> Self {
        NodeRecord {
            id: n.node_id.clone(),
            lat_deg: n.position.lat_deg(),
            lon_deg: n.position.lon_deg(),
            compass_deg: Some(n.compass_angle.to_degrees()),
            is_pano: n.is_panoramic,
            captured_at_ms: n.capture_time,
            thumbnail_url: n.thumbnail_url.clone(),
            full_url: n.full_url.clone(),
            width: n.width,
            height: n.height,
        }
    }
}

/// Axis-aligned latitude/longitude box. Boxes across the antimeridian are not
/// supported.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    pub min: GeoPoint,
    pub max: GeoPoint,
}

impl BBox {
    pub fn new(min: GeoPoint, max: GeoPoint) -> Result<Self, ImageryError> {
        if !(min.lat() < max.lat() && min.lon() < max.lon()) {
            return Err(ImageryError::InvalidBbox(format!(
                "({}, {}) .. ({}, {}) is empty",
                min.lat_deg(),
                min.lon_deg(),
                max.lat_deg(),
                max.lon_deg()
            )));
        }
        Ok(Self { min, max })
    }

    /// Parses `min_lon,min_lat,max_lon,max_lat` in degrees.
    pub fn parse(text: &str) -> Result<Self, ImageryError> {
        let parts: Vec<f64> = text
            .split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| ImageryError::InvalidBbox(format!("{text}: {e}")))?;
        let [min_lon, min_lat, max_lon, max_lat] = parts[..] else {
            return Err(ImageryError::InvalidBbox(format!("{text}: expected four numbers")));
        };
        let point = |lat: f64, lon: f64| {
            GeoPoint::from_degrees(lat, lon).map_err(|e| ImageryError::InvalidBbox(e.to_string()))
        };
        Self::new(point(min_lat, min_lon)?, point(max_lat, max_lon)?)
    }

    pub fn contains(&self, p: GeoPoint) -> bool {
        (self.min.lat()..=self.max.lat()).contains(&p.lat()) && (self.min.lon()..=self.max.lon()).contains(&p.lon())
    }

    /// `min_lon,min_lat,max_lon,max_lat` in degrees.
    pub fn to_query(&self) -> String {
        format!("{},{},{},{}", self.min.lon_deg(), self.min.lat_deg(), self.max.lon_deg(), self.max.lat_deg())
    }
}

/// A source of imagery nodes and their raw image bytes.
pub trait ImageryProvider: Send + Sync {
    fn name(&self) -> &str;

    /// Largest `limit` a single search may request.
    fn max_limit(&self) -> usize;

    /// Nodes inside `bbox`, in no particular order. May include flat images.
    fn search(&self, bbox: &BBox, limit: usize) -> Result<Vec<ImageryNode>, ImageryError>;

    fn node(&self, node_id: &str) -> Result<ImageryNode, ImageryError>;

    /// Encoded (PNG or JPEG) image bytes for `node`.
    fn fetch_bytes(&self, node: &ImageryNode) -> Result<Vec<u8>, ImageryError>;
}
