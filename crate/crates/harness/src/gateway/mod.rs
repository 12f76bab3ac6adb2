//! Uniform access to text-generation endpoints.
//!
//! A [`Backend`] answers one [`CompletionRequest`]. The [`Gateway`] wraps a
//! backend with the on-disk response cache and counts how many calls
//! actually reached the backend.

mod cache;
mod http;
mod scripted;

use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use figqa_core::CompletionRequest;
use serde::{Deserialize, Serialize};

pub use cache::{CacheEntry, ResponseCache};
pub use http::{HttpBackend, HttpReply, HttpTransport, RetryPolicy, UreqTransport};
pub use scripted::{Fixture, ScriptedBackend, UnknownPrompt};

/// Default number of in-flight requests.
pub const DEFAULT_JOBS: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionResponse {
    pub text: String,
    pub finish_reason: String,
    pub from_cache: bool,
    /// Time spent producing this response: the cache read on a hit.
    pub latency_ms: u64,
    /// Latency of the original backend call, when known.
    pub origin_latency_ms: Option<u64>,
    /// Backend attempts made; 0 on a cache hit.
    pub attempts: u32,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GatewayError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("environment variable `{0}` with the API key is not set")]
    MissingApiKey(String),
    #[error("authentication failed (HTTP {status}): {body}")]
    Auth { status: u16, body: String },
    #[error("HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("gave up after {attempts} attempts: {last}")]
    Exhausted { attempts: u32, last: String },
    #[error("endpoint unreachable after {attempts} attempts: {message}")]
    Unreachable { attempts: u32, message: String },
    #[error("malformed response body: {body}")]
    Malformed { body: String },
    #[error("scripted backend has no response for prompt digest {digest}")]
    UnknownPrompt { digest: String },
    #[error("cache: {0}")]
    Cache(String),
}

pub trait Backend: Send + Sync {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, GatewayError>;
}

impl<B: Backend + ?Sized> Backend for Arc<B> {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, GatewayError> {
        (**self).complete(request)
    }
}

pub struct Gateway {
    backend: Arc<dyn Backend>,
    cache: Option<ResponseCache>,
    jobs: usize,
    backend_calls: AtomicUsize,
}

impl Gateway {
    pub fn new(backend: Arc<dyn Backend>) -> Self {
        Gateway {
            backend,
            cache: None,
            jobs: DEFAULT_JOBS,
            backend_calls: AtomicUsize::new(0),
        }
    }

    pub fn with_cache(mut self, dir: impl Into<PathBuf>) -> Self {
        self.cache = Some(ResponseCache::new(dir));
        self
    }

    pub fn with_jobs(mut self, jobs: usize) -> Self {
        self.jobs = jobs.max(1);
        self
    }

    pub fn jobs(&self) -> usize {
        self.jobs
    }

    pub fn cache(&self) -> Option<&ResponseCache> {
        self.cache.as_ref()
    }

    /// Calls that missed the cache and went to the backend.
    pub fn backend_calls(&self) -> usize {
        self.backend_calls.load(Ordering::SeqCst)
    }

    /// Uncached call straight to the backend.
    pub fn complete(
        &self,
        request: &CompletionRequest,
    ) -> Result<CompletionResponse, GatewayError> {
        request.validate().map_err(GatewayError::InvalidRequest)?;
        self.backend_calls.fetch_add(1, Ordering::SeqCst);
        self.backend.complete(request)
    }

    /// Uses the cache when one is configured, otherwise behaves like
    /// [`Gateway::complete`].
    pub fn cached_complete(
        &self,
        request: &CompletionRequest,
    ) -> Result<CompletionResponse, GatewayError> {
        match &self.cache {
            Some(cache) => {
                request.validate().map_err(GatewayError::InvalidRequest)?;
                cache.get_or_fetch(request, || self.complete(request))
            }
            None => self.complete(request),
        }
    }
}

/// Picks a backend per request from the model's endpoint URL:
/// `scripted:<fixture path>` goes to a fixture, anything else over HTTP.
pub struct RoutingBackend {
    http: HttpBackend,
    scripted: std::sync::Mutex<std::collections::BTreeMap<String, Arc<ScriptedBackend>>>,
}

impl RoutingBackend {
    pub fn new(http: HttpBackend) -> Self {
        RoutingBackend {
            http,
            scripted: Default::default(),
        }
    }

    fn scripted(&self, spec: &str) -> Result<Arc<ScriptedBackend>, GatewayError> {
        let mut map = self.scripted.lock().expect("scripted map lock");
        if let Some(b) = map.get(spec) {
            return Ok(b.clone());
        }
        let backend =
            Arc::new(ScriptedBackend::from_uri(spec).map_err(GatewayError::InvalidRequest)?);
        map.insert(spec.to_string(), backend.clone());
        Ok(backend)
    }
}

impl Backend for RoutingBackend {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, GatewayError> {
        match request.model.endpoint_url.strip_prefix("scripted:") {
            Some(spec) => self.scripted(spec)?.complete(request),
            None => self.http.complete(request),
        }
    }
}
