use std::sync::Arc;
use std::time::{Duration, Instant};

use figqa_core::{CompletionRequest, Role, WireFormat};
use rand::Rng;
use serde_json::{json, Value};

use super::{Backend, CompletionResponse, GatewayError};

/// Raw HTTP reply: status code and body text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpReply {
    pub status: u16,
    pub body: String,
}

/// Minimal blocking POST, so retry logic can be tested without sockets.
pub trait HttpTransport: Send + Sync {
    /// `Err` means no HTTP reply was received at all.
    fn post_json(&self, url: &str, bearer: Option<&str>, body: &str) -> Result<HttpReply, String>;
}

pub struct UreqTransport {
    agent: ureq::Agent,
}

impl UreqTransport {
    pub fn new(timeout: Duration) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(timeout))
            .build()
            .into();
        UreqTransport { agent }
    }
}

impl Default for UreqTransport {
    fn default() -> Self {
        Self::new(Duration::from_secs(120))
    }
}

impl HttpTransport for UreqTransport {
    fn post_json(&self, url: &str, bearer: Option<&str>, body: &str) -> Result<HttpReply, String> {
        let mut req = self
            .agent
            .post(url)
            .header("Content-Type", "application/json");
        if let Some(key) = bearer {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req.send(body).map_err(|e| e.to_string())?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| e.to_string())?;
        Ok(HttpReply { status, body: text })
    }
}

/// Exponential backoff with full jitter: before retry `k` (1-based) sleep
/// a uniform duration in `[0, base * factor^(k-1)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay: Duration,
    pub factor: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 5,
            base_delay: Duration::from_secs(1),
            factor: 2.0,
        }
    }
}

impl RetryPolicy {
    pub fn no_delay() -> Self {
        RetryPolicy {
            base_delay: Duration::ZERO,
            ..Self::default()
        }
    }

    pub fn ceiling(&self, retry: u32) -> Duration {
        self.base_delay
            .mul_f64(self.factor.powi(retry.saturating_sub(1) as i32))
    }

    pub fn delay<R: Rng + ?Sized>(&self, retry: u32, rng: &mut R) -> Duration {
        let ceiling = self.ceiling(retry);
        if ceiling.is_zero() {
            return Duration::ZERO;
        }
        ceiling.mul_f64(rng.random::<f64>())
    }
}

const EXCERPT: usize = 2000;

fn excerpt(body: &str) -> String {
    match body.char_indices().nth(EXCERPT) {
        Some((i, _)) => format!("{}...", &body[..i]),
        None => body.to_string(),
    }
}

/// Client for OpenAI-style `chat/completions` (or legacy `completions`)
/// endpoints.
pub struct HttpBackend {
    transport: Arc<dyn HttpTransport>,
    retry: RetryPolicy,
}

impl HttpBackend {
    pub fn new(transport: Arc<dyn HttpTransport>, retry: RetryPolicy) -> Self {
        HttpBackend { transport, retry }
    }

    pub fn ureq() -> Self {
        Self::new(Arc::new(UreqTransport::default()), RetryPolicy::default())
    }

    pub fn request_body(request: &CompletionRequest) -> (String, Value) {
        let base = request.model.endpoint_url.trim_end_matches('/');
        match request.model.wire {
            WireFormat::Chat => {
                let messages: Vec<Value> = request
                    .messages
                    .iter()
                    .map(|m| {
                        let role = match m.role {
                            Role::System => "system",
                            Role::User => "user",
                            Role::Assistant => "assistant",
                        };
                        json!({ "role": role, "content": m.content })
                    })
                    .collect();
                (
                    format!("{base}/chat/completions"),
                    json!({
                        "model": request.model.model_name,
                        "messages": messages,
                        "temperature": request.model.temperature,
                        "max_tokens": request.model.max_tokens,
                    }),
                )
            }
            WireFormat::Completions => {
                let prompt: Vec<&str> = request
                    .messages
                    .iter()
                    .map(|m| m.content.as_str())
                    .collect();
                (
                    format!("{base}/completions"),
                    json!({
                        "model": request.model.model_name,
                        "prompt": prompt.join("\n\n"),
                        "temperature": request.model.temperature,
                        "max_tokens": request.model.max_tokens,
                    }),
                )
            }
        }
    }

    /// First choice's text and finish reason.
    pub fn parse_response(wire: WireFormat, body: &str) -> Result<(String, String), GatewayError> {
        let malformed = || GatewayError::Malformed {
            body: excerpt(body),
        };
        let v: Value = serde_json::from_str(body).map_err(|_| malformed())?;
        let choice = v
            .get("choices")
            .and_then(|c| c.get(0))
            .ok_or_else(malformed)?;
        let text = match wire {
            WireFormat::Chat => choice.get("message").and_then(|m| m.get("content")),
            WireFormat::Completions => choice.get("text"),
        }
        .and_then(Value::as_str)
        .ok_or_else(malformed)?;
        let finish = choice
            .get("finish_reason")
            .and_then(Value::as_str)
            .unwrap_or("unknown");
        Ok((text.to_string(), finish.to_string()))
    }
}

impl Backend for HttpBackend {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, GatewayError> {
        let key_var = &request.model.api_key_source;
        // an empty variable name means the endpoint takes no key
        let key = if key_var.is_empty() {
            None
        } else {
            Some(std::env::var(key_var).map_err(|_| GatewayError::MissingApiKey(key_var.clone()))?)
        };
        let (url, body) = Self::request_body(request);
        let body = body.to_string();
        let mut rng = rand::rng();
        let mut last_failure: Option<GatewayError> = None;
        let started = Instant::now();
        for attempt in 1..=self.retry.max_attempts {
            if attempt > 1 {
                std::thread::sleep(self.retry.delay(attempt - 1, &mut rng));
            }
            match self.transport.post_json(&url, key.as_deref(), &body) {
                Err(message) => {
                    log::warn!("attempt {attempt} to {url} failed: {message}");
                    last_failure = Some(GatewayError::Unreachable {
                        attempts: attempt,
                        message,
                    });
                }
                Ok(reply) if reply.status == 401 || reply.status == 403 => {
                    return Err(GatewayError::Auth {
                        status: reply.status,
                        body: excerpt(&reply.body),
                    });
                }
                Ok(reply) if reply.status == 429 || reply.status >= 500 => {
                    log::warn!("attempt {attempt} to {url}: HTTP {}", reply.status);
                    last_failure = Some(GatewayError::Exhausted {
                        attempts: attempt,
                        last: format!("HTTP {}: {}", reply.status, excerpt(&reply.body)),
                    });
                }
                Ok(reply) if !(200..300).contains(&reply.status) => {
                    return Err(GatewayError::Http {
                        status: reply.status,
                        body: excerpt(&reply.body),
                    });
                }
                Ok(reply) => {
                    let (text, finish_reason) =
                        Self::parse_response(request.model.wire, &reply.body)?;
                    return Ok(CompletionResponse {
                        text,
                        finish_reason,
                        from_cache: false,
                        latency_ms: started.elapsed().as_millis() as u64,
                        origin_latency_ms: None,
                        attempts: attempt,
                    });
                }
            }
        }
        Err(last_failure.unwrap_or(GatewayError::Exhausted {
            attempts: 0,
            last: "no attempts allowed".to_string(),
        }))
    }
}
