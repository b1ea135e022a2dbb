//! Content-addressed response cache: one JSON file per key.
//!
//! Entries carry a digest of their body; an entry whose digest does not
//! match is discarded and the call re-issued. Writes go to a temporary file
//! in the same directory and are renamed into place.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use super::{BackendError, ChatHandle, GenerationRequest, GenerationResponse};

const ENTRY_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CacheKey {
    pub digest: String,
}

fn canonical(value: &Value) -> String {
    // serde_json's default map is ordered by key, so this is canonical.
    serde_json::to_string(value).expect("json values serialize")
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl CacheKey {
    fn from_value(v: Value) -> Self {
        Self {
            digest: sha256_hex(canonical(&v).as_bytes()),
        }
    }

    /// Covers the backend id and every request field, including `seed_hint`.
    pub fn for_chat(backend_id: &str, request: &GenerationRequest) -> Self {
        Self::from_value(json!({
            "kind": "chat",
            "backend": backend_id,
            "request": serde_json::to_value(request).expect("request serializes"),
        }))
    }

    pub fn for_reward(backend_id: &str, context: &str, answer: &str) -> Self {
        Self::from_value(json!({
            "kind": "reward",
            "backend": backend_id,
            "context": context,
            "answer": answer,
        }))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheStats {
    pub hits: u64,
    pub misses: u64,
    pub discarded: u64,
}

impl CacheStats {
    pub fn since(&self, earlier: &CacheStats) -> CacheStats {
        CacheStats {
            hits: self.hits - earlier.hits,
            misses: self.misses - earlier.misses,
            discarded: self.discarded - earlier.discarded,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct Entry {
    v: u32,
    key: String,
    digest: String,
    body: Value,
}

#[derive(Debug)]
pub struct ResponseCache {
    dir: PathBuf,
    hits: AtomicU64,
    misses: AtomicU64,
    discarded: AtomicU64,
    tmp_counter: AtomicU64,
}

impl ResponseCache {
    pub fn open(dir: impl Into<PathBuf>) -> std::io::Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(Self {
            dir,
            hits: AtomicU64::new(0),
            misses: AtomicU64::new(0),
            discarded: AtomicU64::new(0),
            tmp_counter: AtomicU64::new(0),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn stats(&self) -> CacheStats {
        CacheStats {
            hits: self.hits.load(Ordering::Relaxed),
            misses: self.misses.load(Ordering::Relaxed),
            discarded: self.discarded.load(Ordering::Relaxed),
        }
    }

    pub fn path_for(&self, key: &CacheKey) -> PathBuf {
        self.dir
            .join(&key.digest[..2])
            .join(format!("{}.json", key.digest))
    }

    /// Number of entries on disk.
    pub fn len(&self) -> usize {
        let Ok(shards) = fs::read_dir(&self.dir) else {
            return 0;
        };
        shards
            .flatten()
            .filter(|e| e.path().is_dir())
            .flat_map(|e| fs::read_dir(e.path()).into_iter().flatten().flatten())
            .filter(|e| e.path().extension().is_some_and(|x| x == "json"))
            .count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Reads an entry, discarding it when it is unreadable or fails its digest.
    pub fn load<T: DeserializeOwned>(&self, key: &CacheKey) -> Option<T> {
        let path = self.path_for(key);
        let raw = fs::read(&path).ok()?;
        let verified = serde_json::from_slice::<Entry>(&raw).ok().and_then(|e| {
            let ok = e.v == ENTRY_VERSION
                && e.key == key.digest
                && sha256_hex(canonical(&e.body).as_bytes()) == e.digest;
            ok.then_some(e.body)
        });
        match verified.and_then(|body| serde_json::from_value::<T>(body).ok()) {
            Some(v) => Some(v),
            None => {
                log::warn!("discarding corrupt cache entry {}", path.display());
                self.discarded.fetch_add(1, Ordering::Relaxed);
                let _ = fs::remove_file(&path);
                None
            }
        }
    }

    pub fn store<T: Serialize>(&self, key: &CacheKey, value: &T) -> std::io::Result<()> {
        let body = serde_json::to_value(value).map_err(std::io::Error::other)?;
        let entry = Entry {
            v: ENTRY_VERSION,
            key: key.digest.clone(),
            digest: sha256_hex(canonical(&body).as_bytes()),
            body,
        };
        let path = self.path_for(key);
        let shard = path.parent().expect("entry path has a shard dir");
        fs::create_dir_all(shard)?;
        let tmp = shard.join(format!(
            ".{}.{}.{:?}.{}.tmp",
            key.digest,
            std::process::id(),
            std::thread::current().id(),
            self.tmp_counter.fetch_add(1, Ordering::Relaxed)
        ));
        {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(&serde_json::to_vec(&entry).map_err(std::io::Error::other)?)?;
        }
        fs::rename(&tmp, &path)
    }

    /// Returns the cached value for `key`, or computes, persists and returns it.
    pub fn cached_value<T, F>(&self, key: &CacheKey, compute: F) -> Result<T, BackendError>
    where
        T: Serialize + DeserializeOwned,
        F: FnOnce() -> Result<T, BackendError>,
    {
        if let Some(v) = self.load::<T>(key) {
            self.hits.fetch_add(1, Ordering::Relaxed);
            return Ok(v);
        }
        self.misses.fetch_add(1, Ordering::Relaxed);
        let v = compute()?;
        if let Err(e) = self.store(key, &v) {
            log::warn!("failed to persist cache entry {}: {e}", key.digest);
        }
        Ok(v)
    }

    /// Chat call through the cache; a miss forwards to the handle's backend.
    pub fn cached_call(
        &self,
        key: &CacheKey,
        request: &GenerationRequest,
        handle: &ChatHandle,
    ) -> Result<GenerationResponse, BackendError> {
        self.cached_value(key, || handle.complete_uncached(request))
    }
}
