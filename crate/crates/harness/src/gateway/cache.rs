use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use figqa_core::{CacheKey, CompletionRequest};
use serde::{Deserialize, Serialize};

use super::{CompletionResponse, GatewayError};
use crate::io::write_atomic;

/// One cached response. The request's canonical form is stored so a hit
/// can be checked against the request that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub request_canonical: String,
    pub response_text: String,
    pub finish_reason: String,
    /// Unix milliseconds at write time.
    pub timestamp: u64,
    #[serde(default)]
    pub origin_latency_ms: Option<u64>,
}

/// Responses stored one file per key under `<dir>/<k[0..2]>/<k[2..4]>/<k>.json`.
#[derive(Debug, Clone)]
pub struct ResponseCache {
    dir: PathBuf,
}

impl ResponseCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        ResponseCache { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path_for(&self, key: &CacheKey) -> PathBuf {
        let k = key.as_str();
        self.dir
            .join(&k[0..2])
            .join(&k[2..4])
            .join(format!("{k}.json"))
    }

    /// Stored entry for `request`; unreadable, truncated or mismatched
    /// files count as a miss.
    pub fn get(&self, request: &CompletionRequest) -> Option<CacheEntry> {
        let path = self.path_for(&request.cache_key());
        let bytes = fs::read(&path).ok()?;
        match serde_json::from_slice::<CacheEntry>(&bytes) {
            Ok(entry) if entry.request_canonical == request.canonical() => Some(entry),
            Ok(_) => {
                log::warn!(
                    "cache entry {} does not match its request; refetching",
                    path.display()
                );
                None
            }
            Err(e) => {
                log::warn!("corrupt cache entry {}: {e}; refetching", path.display());
                None
            }
        }
    }

    pub fn put(&self, request: &CompletionRequest, entry: &CacheEntry) -> Result<(), GatewayError> {
        let path = self.path_for(&request.cache_key());
        let bytes = serde_json::to_vec_pretty(entry).expect("cache entry serializes");
        write_atomic(&path, &bytes).map_err(|e| GatewayError::Cache(e.to_string()))
    }

    pub fn get_or_fetch<F>(
        &self,
        request: &CompletionRequest,
        fetch: F,
    ) -> Result<CompletionResponse, GatewayError>
    where
        F: FnOnce() -> Result<CompletionResponse, GatewayError>,
    {
        let started = Instant::now();
        if let Some(entry) = self.get(request) {
            return Ok(CompletionResponse {
                text: entry.response_text,
                finish_reason: entry.finish_reason,
                from_cache: true,
                latency_ms: started.elapsed().as_millis() as u64,
                origin_latency_ms: entry.origin_latency_ms,
                attempts: 0,
            });
        }
        let response = fetch()?;
        let entry = CacheEntry {
            request_canonical: request.canonical(),
            response_text: response.text.clone(),
            finish_reason: response.finish_reason.clone(),
            timestamp: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_millis() as u64)
                .unwrap_or(0),
            origin_latency_ms: Some(response.latency_ms),
        };
        self.put(request, &entry)?;
        Ok(response)
    }
}
