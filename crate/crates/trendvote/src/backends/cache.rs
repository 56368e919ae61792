//! Read-through response cache.
//!
//! One JSON entry per line, append-only. The key is the SHA-256 digest of
//! the canonical fingerprint `model_id \n temperature(6 decimals) \n prompt`,
//! verified against the stored fingerprint on load. With no inner backend
//! the cache runs in replay mode and errors on any miss, which makes a run
//! over warmed fixtures a pure function of its inputs.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Mutex, RwLock};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{parse_label, BackendError, Classifier, ClassifierRequest, ClassifierResponse, ResponseSource};

/// SHA-256 digest (hex) of the canonical request fingerprint.
pub fn cache_key(model_id: &str, temperature: f64, prompt: &str) -> String {
    let fingerprint = format!("{model_id}\n{temperature:.6}\n{prompt}");
    let digest = Sha256::digest(fingerprint.as_bytes());
    let mut out = String::with_capacity(64);
    for byte in digest {
        out.push_str(&format!("{byte:02x}"));
    }
    out
}

#[derive(Serialize, Deserialize)]
struct CacheEntry {
    key: String,
    model_id: String,
    temperature: f64,
    prompt: String,
    raw: String,
    created_at: String,
}

/// Hit/miss counters, observable after a run.
#[derive(Debug, Default)]
pub struct CacheStats {
    hits: AtomicU64,
    misses: AtomicU64,
    inner_calls: AtomicU64,
}

impl CacheStats {
    pub fn hits(&self) -> u64 {
        self.hits.load(Ordering::Relaxed)
    }
    pub fn misses(&self) -> u64 {
        self.misses.load(Ordering::Relaxed)
    }
    /// Delegated calls, i.e. how often the inner (possibly remote) backend ran.
    pub fn inner_calls(&self) -> u64 {
        self.inner_calls.load(Ordering::Relaxed)
    }
}

pub struct CachedBackend {
    inner: Option<Box<dyn Classifier>>,
    path: PathBuf,
    entries: RwLock<HashMap<String, String>>,
    writer: Mutex<File>,
    stats: CacheStats,
}

impl CachedBackend {
    /// Open (or create) a cache file wrapping `inner`. `inner = None` is
    /// replay mode: hits are served, misses are errors.
    pub fn open(path: &Path, inner: Option<Box<dyn Classifier>>) -> Result<Self, BackendError> {
        let mut entries = HashMap::new();
        if path.exists() {
            let text = std::fs::read_to_string(path).map_err(|source| BackendError::CacheIo {
                path: path.display().to_string(),
                source,
            })?;
            for (idx, line) in text.lines().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                let entry: CacheEntry =
                    serde_json::from_str(line).map_err(|e| BackendError::CacheParse {
                        path: path.display().to_string(),
                        line: idx + 1,
                        reason: e.to_string(),
                    })?;
                let computed = cache_key(&entry.model_id, entry.temperature, &entry.prompt);
                if computed != entry.key {
                    return Err(BackendError::CacheIntegrity {
                        path: path.display().to_string(),
                        line: idx + 1,
                        stored: entry.key,
                        computed,
                    });
                }
                entries.insert(entry.key, entry.raw);
            }
        }
        let writer = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|source| BackendError::CacheIo {
                path: path.display().to_string(),
                source,
            })?;
        Ok(CachedBackend {
            inner,
            path: path.to_path_buf(),
            entries: RwLock::new(entries),
            writer: Mutex::new(writer),
            stats: CacheStats::default(),
        })
    }

    pub fn stats(&self) -> &CacheStats {
        &self.stats
    }

    pub fn len(&self) -> usize {
        self.entries.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn append(&self, key: &str, model_id: &str, temperature: f64, prompt: &str, raw: &str) -> Result<(), BackendError> {
        let entry = CacheEntry {
            key: key.to_string(),
            model_id: model_id.to_string(),
            temperature,
            prompt: prompt.to_string(),
            raw: raw.to_string(),
            created_at: chrono::Utc::now().to_rfc3339(),
        };
        let line = serde_json::to_string(&entry).expect("cache entry serializes");
        let mut writer = self.writer.lock().unwrap();
        writeln!(writer, "{line}").map_err(|source| BackendError::CacheIo {
            path: self.path.display().to_string(),
            source,
        })?;
        writer.flush().map_err(|source| BackendError::CacheIo {
            path: self.path.display().to_string(),
            source,
        })?;
        Ok(())
    }

    fn get(&self, key: &str) -> Option<String> {
        self.entries.read().unwrap().get(key).cloned()
    }

    fn record(&self, key: String, model_id: &str, temperature: f64, prompt: &str, raw: &str) -> Result<(), BackendError> {
        self.append(&key, model_id, temperature, prompt, raw)?;
        self.entries.write().unwrap().insert(key, raw.to_string());
        Ok(())
    }
}

impl Classifier for CachedBackend {
    fn classify(&self, request: &ClassifierRequest) -> Result<ClassifierResponse, BackendError> {
        let key = cache_key(&request.model_id, request.temperature, &request.prompt);
        if let Some(raw) = self.get(&key) {
            self.stats.hits.fetch_add(1, Ordering::Relaxed);
            let label = parse_label(&raw, request.label_set)?;
            return Ok(ClassifierResponse {
                raw,
                label,
                source: ResponseSource::Cache,
            });
        }
        self.stats.misses.fetch_add(1, Ordering::Relaxed);
        let Some(inner) = self.inner.as_deref() else {
            return Err(BackendError::CacheMiss { digest: key });
        };
        self.stats.inner_calls.fetch_add(1, Ordering::Relaxed);
        let resp = inner.classify(request)?;
        self.record(key, &request.model_id, request.temperature, &request.prompt, &resp.raw)?;
        Ok(resp)
    }

    fn summarize(&self, article: &str, n_tokens: usize) -> Result<String, BackendError> {
        // Summaries share the cache file under a synthetic prompt.
        let prompt = format!("[summarize to {n_tokens} tokens]\n{article}");
        let model_id = "summarize";
        let key = cache_key(model_id, 0.0, &prompt);
        if let Some(raw) = self.get(&key) {
            self.stats.hits.fetch_add(1, Ordering::Relaxed);
            return Ok(raw);
        }
        self.stats.misses.fetch_add(1, Ordering::Relaxed);
        let Some(inner) = self.inner.as_deref() else {
            return Err(BackendError::CacheMiss { digest: key });
        };
        self.stats.inner_calls.fetch_add(1, Ordering::Relaxed);
        let raw = inner.summarize(article, n_tokens)?;
        self.record(key, model_id, 0.0, &prompt, &raw)?;
        Ok(raw)
    }

    fn name(&self) -> &'static str {
        "cache"
    }
}
