//! Content-addressed response cache.
//!
//! Entries are appended to a JSONL file as they arrive and indexed in
//! memory, so a crashed run loses at most the entry being written. The file
//! is human-auditable: one `{"key": ..., "text": ...}` object per line.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::GatewayError;

#[derive(Serialize, Deserialize)]
struct Entry {
    key: String,
    text: String,
}

struct Inner {
    map: HashMap<String, String>,
    file: Option<File>,
}

pub struct ResponseCache {
    path: Option<PathBuf>,
    inner: Mutex<Inner>,
}

impl ResponseCache {
    /// Open (or create) a file-backed cache, loading any existing entries.
    pub fn open(path: &Path) -> Result<Self, GatewayError> {
        let io_err = |source| GatewayError::CacheIo {
            path: path.display().to_string(),
            source,
        };
        let mut map = HashMap::new();
        if path.exists() {
            let reader = BufReader::new(File::open(path).map_err(io_err)?);
            for (lineno, line) in reader.lines().enumerate() {
                let line = line.map_err(io_err)?;
                if line.trim().is_empty() {
                    continue;
                }
                let entry: Entry = serde_json::from_str(&line).map_err(|e| {
                    GatewayError::Protocol(format!(
                        "corrupt cache entry at {}:{}: {e}",
                        path.display(),
                        lineno + 1
                    ))
                })?;
                map.insert(entry.key, entry.text);
            }
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(io_err)?;
        Ok(ResponseCache {
            path: Some(path.to_path_buf()),
            inner: Mutex::new(Inner {
                map,
                file: Some(file),
            }),
        })
    }

    /// A cache that lives only for the process. Used in tests and whenever
    /// no `--cache` path is configured but deduplication is still wanted.
    pub fn in_memory() -> Self {
        ResponseCache {
            path: None,
            inner: Mutex::new(Inner {
                map: HashMap::new(),
                file: None,
            }),
        }
    }

    pub fn len(&self) -> usize {
        self.inner.lock().expect("cache lock").map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, key: &str) -> Option<String> {
        self.inner.lock().expect("cache lock").map.get(key).cloned()
    }

    pub fn insert(&self, key: &str, text: &str) -> Result<(), GatewayError> {
        let mut inner = self.inner.lock().expect("cache lock");
        if inner.map.contains_key(key) {
            return Ok(());
        }
        if let Some(file) = inner.file.as_mut() {
            let mut line = serde_json::to_string(&Entry {
                key: key.to_string(),
                text: text.to_string(),
            })
            .expect("cache entry serializes");
            line.push('\n');
            file.write_all(line.as_bytes())
                .and_then(|()| file.flush())
                .map_err(|source| GatewayError::CacheIo {
                    path: self
                        .path
                        .as_ref()
                        .map(|p| p.display().to_string())
                        .unwrap_or_default(),
                    source,
                })?;
        }
        inner.map.insert(key.to_string(), text.to_string());
        Ok(())
    }
}
