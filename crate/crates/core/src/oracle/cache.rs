//! Persistent comparison cache.
//!
//! File layout: UTF-8, one JSON object per line,
//!
//! ```text
//! {"key":"<64 hex>","template":"<name>@<12 hex>","raw":"<generated text>","parsed":"prefers_a","timestamp":1760000000}
//! ```
//!
//! `key` is the SHA-256 of the template id and both passages (text and
//! aspect) in slot order, so `(A, B)` and `(B, A)` are distinct entries.
//! Records are appended and flushed as calls complete; on load a later
//! record for the same key replaces an earlier one and unreadable lines
//! (such as a line truncated by a crash) are skipped.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::labels::Passage;

use super::parse::Preference;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub key: String,
    pub template: String,
    pub raw: String,
    pub parsed: Preference,
    pub timestamp: u64,
}

impl CacheEntry {
    pub fn new(key: String, template: String, raw: String, parsed: Preference) -> Self {
        let timestamp = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        Self {
            key,
            template,
            raw,
            parsed,
            timestamp,
        }
    }
}

/// Order-sensitive digest of one directed comparison call.
pub fn comparison_key(template_id: &str, a: Passage<'_>, b: Passage<'_>) -> String {
    let mut hasher = Sha256::new();
    let mut field = |bytes: &[u8]| {
        hasher.update((bytes.len() as u64).to_le_bytes());
        hasher.update(bytes);
    };
    field(template_id.as_bytes());
    for p in [a, b] {
        field(p.text.as_bytes());
        match p.aspect {
            Some(aspect) => {
                field(b"+");
                field(aspect.as_bytes());
            }
            None => field(b"-"),
        }
    }
    hex::encode(hasher.finalize())
}

/// Short digest of a rendered prompt, used in error messages.
pub fn prompt_digest(prompt: &str) -> String {
    hex::encode(&Sha256::digest(prompt.as_bytes())[..8])
}

pub(crate) fn digest64(bytes: &[u8]) -> u64 {
    let d = Sha256::digest(bytes);
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}

/// In-memory comparison cache, optionally mirrored to an append-only file.
#[derive(Debug, Default)]
pub struct ComparisonCache {
    entries: RwLock<HashMap<String, CacheEntry>>,
    sink: Option<Mutex<BufWriter<File>>>,
    path: Option<PathBuf>,
}

impl ComparisonCache {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Loads `path` if it exists and appends new records to it.
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let (loaded, skipped) = if path.exists() {
            load_entries(path)?
        } else {
            (Vec::new(), 0)
        };
        if skipped > 0 {
            log::warn!("{}: skipped {skipped} unreadable cache line(s)", path.display());
        }
        let entries = loaded.into_iter().map(|e| (e.key.clone(), e)).collect();
        Self::with_sink(path, entries, false)
    }

    /// Loads `path` if it exists without ever writing to it.
    pub fn read_only(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let entries = if path.exists() { load_entries(path)?.0 } else { Vec::new() };
        Ok(Self {
            entries: RwLock::new(entries.into_iter().map(|e| (e.key.clone(), e)).collect()),
            sink: None,
            path: Some(path.to_path_buf()),
        })
    }

    /// Starts an empty cache at `path`, truncating any existing file.
    pub fn create(path: impl AsRef<Path>) -> Result<Self> {
        Self::with_sink(path.as_ref(), HashMap::new(), true)
    }

    fn with_sink(path: &Path, entries: HashMap<String, CacheEntry>, truncate: bool) -> Result<Self> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let file = OpenOptions::new()
            .create(true)
            .append(!truncate)
            .write(true)
            .truncate(truncate)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        Ok(Self {
            entries: RwLock::new(entries),
            sink: Some(Mutex::new(BufWriter::new(file))),
            path: Some(path.to_path_buf()),
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn get(&self, key: &str) -> Option<CacheEntry> {
        self.entries.read().expect("cache lock").get(key).cloned()
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.read().expect("cache lock").contains_key(key)
    }

    pub fn insert(&self, entry: CacheEntry) -> Result<()> {
        if let Some(sink) = &self.sink {
            let line = serde_json::to_string(&entry)?;
            let mut w = sink.lock().expect("cache sink lock");
            let path = self.path.as_deref().unwrap_or(Path::new("<cache>"));
            writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
            w.flush().map_err(|e| Error::io(path, e))?;
        }
        self.entries
            .write()
            .expect("cache lock")
            .insert(entry.key.clone(), entry);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// All entries sorted by key.
    pub fn snapshot(&self) -> Vec<CacheEntry> {
        let mut all: Vec<CacheEntry> = self.entries.read().expect("cache lock").values().cloned().collect();
        all.sort_by(|a, b| a.key.cmp(&b.key));
        all
    }
}

/// Reads a cache file, returning the de-duplicated entries (last record per
/// key wins, first-seen order kept) and the number of skipped lines.
pub fn load_entries(path: &Path) -> Result<(Vec<CacheEntry>, usize)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut order: Vec<String> = Vec::new();
    let mut map: HashMap<String, CacheEntry> = HashMap::new();
    let mut skipped = 0;
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<CacheEntry>(&line) {
            Ok(entry) => {
                if !map.contains_key(&entry.key) {
                    order.push(entry.key.clone());
                }
                map.insert(entry.key.clone(), entry);
            }
            Err(_) => skipped += 1,
        }
    }
    let entries = order
        .into_iter()
        .map(|k| map.remove(&k).expect("key recorded"))
        .collect();
    Ok((entries, skipped))
}

/// Rewrites a cache file with exactly `entries` (via a temporary file).
pub fn write_entries(path: &Path, entries: &[CacheEntry]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let file = File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        let mut w = BufWriter::new(file);
        for entry in entries {
            writeln!(w, "{}", serde_json::to_string(entry)?).map_err(|e| Error::io(&tmp, e))?;
        }
        w.flush().map_err(|e| Error::io(&tmp, e))?;
    }
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}
