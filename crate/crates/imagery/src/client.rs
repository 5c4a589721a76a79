use std::collections::{HashMap, VecDeque};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use serde::Serialize;

use streetstage_core::Panorama;

use crate::cache::DiskCache;
use crate::{BBox, ImageryError, ImageryNode, ImageryProvider};

const DECODED_CAPACITY: usize = 4;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ClientStats {
    pub cache_hits: u64,
    pub provider_calls: u64,
}

/// Provider access with result filtering, caching and per-node single-flight.
pub struct ImageryClient {
    provider: Arc<dyn ImageryProvider>,
    disk: Option<DiskCache>,
    decoded: Mutex<VecDeque<(String, Arc<Panorama>)>>,
    nodes: Mutex<HashMap<String, ImageryNode>>,
    inflight: Mutex<HashMap<String, Arc<Mutex<()>>>>,
    cache_hits: AtomicU64,
    provider_calls: AtomicU64,
}

impl ImageryClient {
    pub fn new(provider: Arc<dyn ImageryProvider>, disk: Option<DiskCache>) -> Self {
        Self {
            provider,
            disk,
            decoded: Mutex::new(VecDeque::new()),
            nodes: Mutex::new(HashMap::new()),
            inflight: Mutex::new(HashMap::new()),
            cache_hits: AtomicU64::new(0),
            provider_calls: AtomicU64::new(0),
        }
    }

    pub fn provider_name(&self) -> &str {
        self.provider.name()
    }

    pub fn stats(&self) -> ClientStats {
        ClientStats {
            cache_hits: self.cache_hits.load(Ordering::Relaxed),
            provider_calls: self.provider_calls.load(Ordering::Relaxed),
        }
    }

    pub fn disk_cache(&self) -> Option<&DiskCache> {
        self.disk.as_ref()
    }

    /// Panoramic nodes inside `bbox`, newest capture first.
    pub fn search_nodes(&self, bbox: &BBox, limit: usize) -> Result<Vec<ImageryNode>, ImageryError> {
        let cap = self.provider.max_limit();
        if limit > cap {
            return Err(ImageryError::LimitTooLarge { limit, cap });
        }
        if limit == 0 {
            return Ok(Vec::new());
        }
        self.provider_calls.fetch_add(1, Ordering::Relaxed);
        let mut nodes: Vec<ImageryNode> = self
            .provider
            .search(bbox, limit)?
            .into_iter()
            .filter(|n| n.is_panoramic && bbox.contains(n.position))
            .collect();
        nodes.sort_by(|a, b| b.capture_time.cmp(&a.capture_time).then_with(|| a.node_id.cmp(&b.node_id)));
        nodes.truncate(limit);
        let mut memo = self.nodes.lock().unwrap();
        for n in &nodes {
            memo.insert(n.node_id.clone(), n.clone());
        }
        Ok(nodes)
    }

    /// Node metadata, remembered after the first lookup.
    pub fn node(&self, node_id: &str) -> Result<ImageryNode, ImageryError> {
        if let Some(n) = self.nodes.lock().unwrap().get(node_id) {
            return Ok(n.clone());
        }
        self.provider_calls.fetch_add(1, Ordering::Relaxed);
        let node = self.provider.node(node_id)?;
        self.nodes.lock().unwrap().insert(node_id.to_owned(), node.clone());
        Ok(node)
    }

    fn decoded_get(&self, node_id: &str) -> Option<Arc<Panorama>> {
        let mut decoded = self.decoded.lock().unwrap();
        let i = decoded.iter().position(|(k, _)| k == node_id)?;
        let entry = decoded.remove(i)?;
        let pano = entry.1.clone();
        decoded.push_back(entry);
        Some(pano)
    }

    fn decoded_put(&self, node_id: &str, pano: Arc<Panorama>) {
        let mut decoded = self.decoded.lock().unwrap();
        decoded.retain(|(k, _)| k != node_id);
        decoded.push_back((node_id.to_owned(), pano));
        while decoded.len() > DECODED_CAPACITY {
            decoded.pop_front();
        }
    }

    /// The node's panorama with `north_offset` taken from its compass angle.
    /// Concurrent calls for one node share a single provider request.
    pub fn fetch_panorama(&self, node: &ImageryNode) -> Result<Arc<Panorama>, ImageryError> {
        if !node.is_panoramic {
            return Err(ImageryError::NotPanoramic(node.node_id.clone()));
        }
        if let Some(p) = self.decoded_get(&node.node_id) {
            self.cache_hits.fetch_add(1, Ordering::Relaxed);
            return Ok(p);
        }
        let gate = self.inflight.lock().unwrap().entry(node.node_id.clone()).or_default().clone();
        let _guard = gate.lock().unwrap();
        if let Some(p) = self.decoded_get(&node.node_id) {
            self.cache_hits.fetch_add(1, Ordering::Relaxed);
            return Ok(p);
        }

        let cached = self.disk.as_ref().and_then(|d| d.get(&node.node_id));
        let pano = match cached {
            Some(bytes) => {
                self.cache_hits.fetch_add(1, Ordering::Relaxed);
                Panorama::decode(&bytes, node.compass_angle)?
            }
            None => {
                self.provider_calls.fetch_add(1, Ordering::Relaxed);
                let bytes = self.provider.fetch_bytes(node)?;
                let pano = Panorama::decode(&bytes, node.compass_angle)?;
                if let Some(d) = &self.disk {
                    if let Err(e) = d.put(&node.node_id, &bytes) {
                        tracing::warn!(node = %node.node_id, error = %e, "failed to cache panorama");
                    }
                }
                pano
            }
        };
        let pano = Arc::new(pano);
        self.decoded_put(&node.node_id, pano.clone());
        self.inflight.lock().unwrap().remove(&node.node_id);
        Ok(pano)
    }
}
