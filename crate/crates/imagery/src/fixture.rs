//! Offline provider backed by a directory:
//!
//! ```text
//! <dir>/nodes.json     array of NodeRecord
//! <dir>/<node_id>.png  panorama (or flat image) for each node
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use crate::{BBox, ImageryError, ImageryNode, ImageryProvider, NodeRecord};

pub const NODES_FILE: &str = "nodes.json";

#[derive(Debug, Clone)]
pub struct FixtureProvider {
    dir: PathBuf,
    nodes: Vec<ImageryNode>,
}

impl FixtureProvider {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, ImageryError> {
        let dir = dir.into();
        let text = fs::read_to_string(dir.join(NODES_FILE))?;
        let records: Vec<NodeRecord> =
            serde_json::from_str(&text).map_err(|e| ImageryError::Malformed(format!("{NODES_FILE}: {e}")))?;
        let nodes = records.into_iter().map(NodeRecord::into_node).collect::<Result<_, _>>()?;
        Ok(Self { dir, nodes })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn nodes(&self) -> &[ImageryNode] {
        &self.nodes
    }
}

impl ImageryProvider for FixtureProvider {
    fn name(&self) -> &str {
        "fixture"
    }

    fn max_limit(&self) -> usize {
        10_000
    }

    fn search(&self, bbox: &BBox, limit: usize) -> Result<Vec<ImageryNode>, ImageryError> {
        Ok(self.nodes.iter().filter(|n| bbox.contains(n.position)).take(limit).cloned().collect())
    }

    fn node(&self, node_id: &str) -> Result<ImageryNode, ImageryError> {
        self.nodes
            .iter()
            .find(|n| n.node_id == node_id)
            .cloned()
            .ok_or_else(|| ImageryError::NotFound(node_id.to_owned()))
    }

    fn fetch_bytes(&self, node: &ImageryNode) -> Result<Vec<u8>, ImageryError> {
        let path = self.dir.join(format!("{}.png", node.node_id));
        fs::read(&path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => ImageryError::NotFound(node.node_id.clone()),
            _ => e.into(),
        })
    }
}
