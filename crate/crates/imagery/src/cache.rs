//! On-disk image cache keyed by node id, evicted least-recently-used first
//! once the byte budget is exceeded.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use streetstage_core::frames::sha256_hex;

pub const DEFAULT_CACHE_BUDGET_BYTES: u64 = 2 * 1024 * 1024 * 1024;

const INDEX_FILE: &str = "index.json";

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Entry {
    file: String,
    sha256: String,
    bytes: u64,
    last_used: u64,
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct Index {
    tick: u64,
    entries: BTreeMap<String, Entry>,
}

impl Index {
    fn total(&self) -> u64 {
        self.entries.values().map(|e| e.bytes).sum()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct CacheStats {
    pub entries: usize,
    pub bytes: u64,
    pub evictions: u64,
}

#[derive(Debug)]
pub struct DiskCache {
    dir: PathBuf,
    budget: u64,
    index: Mutex<Index>,
    evictions: Mutex<u64>,
}

/// Writes `bytes` next to `path` and renames it into place.
fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

impl DiskCache {
    pub fn open(dir: impl Into<PathBuf>, budget_bytes: u64) -> io::Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        let index = match fs::read_to_string(dir.join(INDEX_FILE)) {
            Ok(text) => serde_json::from_str(&text).unwrap_or_else(|e| {
                tracing::warn!(error = %e, "discarding unreadable cache index");
                Index::default()
            }),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Index::default(),
            Err(e) => return Err(e),
        };
        Ok(Self { dir, budget: budget_bytes, index: Mutex::new(index), evictions: Mutex::new(0) })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn budget(&self) -> u64 {
        self.budget
    }

    fn save(&self, index: &Index) -> io::Result<()> {
        let text = serde_json::to_vec_pretty(index).map_err(io::Error::other)?;
        write_atomic(&self.dir.join(INDEX_FILE), &text)
    }

    /// Cached bytes for `node_id`, if present and intact.
    pub fn get(&self, node_id: &str) -> Option<Vec<u8>> {
        let mut index = self.index.lock().unwrap();
        let entry = index.entries.get(node_id)?.clone();
        let bytes = match fs::read(self.dir.join(&entry.file)) {
            Ok(b) if sha256_hex(&b) == entry.sha256 => b,
            _ => {
                tracing::warn!(node = node_id, "dropping missing or corrupt cache entry");
                index.entries.remove(node_id);
                let _ = fs::remove_file(self.dir.join(&entry.file));
                let _ = self.save(&index);
                return None;
            }
        };
        index.tick += 1;
        let tick = index.tick;
        if let Some(e) = index.entries.get_mut(node_id) {
            e.last_used = tick;
        }
        if let Err(e) = self.save(&index) {
            tracing::warn!(error = %e, "failed to persist cache index");
        }
        Some(bytes)
    }

    /// Stores `bytes` under `node_id`, then evicts older entries until the
    /// cache fits its budget. Objects larger than the whole budget are not cached.
    pub fn put(&self, node_id: &str, bytes: &[u8]) -> io::Result<()> {
        let size = bytes.len() as u64;
        if size > self.budget {
            return Ok(());
        }
        let file = format!("{}.img", sha256_hex(node_id.as_bytes()));
        write_atomic(&self.dir.join(&file), bytes)?;

        let mut index = self.index.lock().unwrap();
        index.tick += 1;
        let entry = Entry { file, sha256: sha256_hex(bytes), bytes: size, last_used: index.tick };
        index.entries.insert(node_id.to_owned(), entry);
        while index.total() > self.budget {
            let oldest = index
                .entries
                .iter()
                .filter(|(k, _)| k.as_str() != node_id)
                .min_by_key(|(_, e)| e.last_used)
                .map(|(k, _)| k.clone());
            let Some(key) = oldest else { break };
            if let Some(e) = index.entries.remove(&key) {
                let _ = fs::remove_file(self.dir.join(&e.file));
                *self.evictions.lock().unwrap() += 1;
            }
        }
        self.save(&index)
    }

    pub fn contains(&self, node_id: &str) -> bool {
        self.index.lock().unwrap().entries.contains_key(node_id)
    }

    pub fn stats(&self) -> CacheStats {
        let index = self.index.lock().unwrap();
        CacheStats { entries: index.entries.len(), bytes: index.total(), evictions: *self.evictions.lock().unwrap() }
    }
}
