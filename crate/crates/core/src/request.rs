//! Model call descriptions and their canonical cache keys.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::digest::sha256_hex;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn user(content: impl Into<String>) -> Self {
        Message {
            role: Role::User,
            content: content.into(),
        }
    }

    pub fn system(content: impl Into<String>) -> Self {
        Message {
            role: Role::System,
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Message {
            role: Role::Assistant,
            content: content.into(),
        }
    }
}

/// Which HTTP route and body shape an endpoint speaks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WireFormat {
    /// `POST <endpoint>/chat/completions` with a `messages` array.
    #[default]
    Chat,
    /// `POST <endpoint>/completions` with the messages concatenated into `prompt`.
    Completions,
}

pub const DEFAULT_API_KEY_ENV: &str = "OPENAI_API_KEY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub endpoint_url: String,
    pub model_name: String,
    pub temperature: f64,
    pub max_tokens: u32,
    /// Name of the environment variable holding the API key, never the key.
    pub api_key_source: String,
    #[serde(default)]
    pub wire: WireFormat,
}

impl ModelSpec {
    pub fn new(endpoint_url: impl Into<String>, model_name: impl Into<String>) -> Self {
        ModelSpec {
            endpoint_url: endpoint_url.into(),
            model_name: model_name.into(),
            temperature: 0.0,
            max_tokens: 1,
            api_key_source: DEFAULT_API_KEY_ENV.to_string(),
            wire: WireFormat::Chat,
        }
    }

    /// Literal rewriting: temperature 0, at most 100 tokens.
    pub fn simplify_preset(endpoint_url: impl Into<String>, model_name: impl Into<String>) -> Self {
        ModelSpec {
            max_tokens: 100,
            ..Self::new(endpoint_url, model_name)
        }
    }

    /// Direct yes/no answering: temperature 0, a single token.
    pub fn qa_preset(endpoint_url: impl Into<String>, model_name: impl Into<String>) -> Self {
        ModelSpec {
            max_tokens: 1,
            ..Self::new(endpoint_url, model_name)
        }
    }

    /// Chain-of-thought answering needs room for the rewritten passage.
    pub fn cot_preset(endpoint_url: impl Into<String>, model_name: impl Into<String>) -> Self {
        ModelSpec {
            max_tokens: 256,
            ..Self::new(endpoint_url, model_name)
        }
    }

    /// Question/answer generation.
    pub fn synthetic_preset(
        endpoint_url: impl Into<String>,
        model_name: impl Into<String>,
    ) -> Self {
        ModelSpec {
            max_tokens: 128,
            ..Self::new(endpoint_url, model_name)
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err("temperature must be a finite number >= 0".to_string());
        }
        if self.max_tokens == 0 {
            return Err("max_tokens must be positive".to_string());
        }
        if self.model_name.is_empty() {
            return Err("model_name must be non-empty".to_string());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub model: ModelSpec,
    pub messages: Vec<Message>,
    /// Free-form label for logs; not part of the cache key.
    pub tag: String,
}

impl CompletionRequest {
    pub fn new(model: ModelSpec, messages: Vec<Message>, tag: impl Into<String>) -> Self {
        CompletionRequest {
            model,
            messages,
            tag: tag.into(),
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        self.model.validate()?;
        match self.messages.iter().find(|m| m.role != Role::System) {
            None => Err("request needs at least one non-system message".to_string()),
            Some(m) if m.role != Role::User => {
                Err("first non-system message must come from the user".to_string())
            }
            Some(_) => Ok(()),
        }
    }

    /// Canonical JSON over exactly the fields that determine the response.
    /// Keys are emitted in sorted order; the API key source and tag are excluded.
    pub fn canonical(&self) -> String {
        #[derive(Serialize)]
        struct Canon<'a> {
            endpoint_url: &'a str,
            max_tokens: u32,
            messages: Vec<CanonMessage<'a>>,
            model_name: &'a str,
            temperature: f64,
            wire: WireFormat,
        }
        let temperature = if self.model.temperature == 0.0 {
            0.0
        } else {
            self.model.temperature
        };
        let canon = Canon {
            endpoint_url: self.model.endpoint_url.trim_end_matches('/'),
            max_tokens: self.model.max_tokens,
            messages: canon_messages(&self.messages),
            model_name: &self.model.model_name,
            temperature,
            wire: self.model.wire,
        };
        serde_json::to_string(&canon).expect("canonical request serializes")
    }

    pub fn cache_key(&self) -> CacheKey {
        CacheKey(sha256_hex(self.canonical().as_bytes()))
    }

    /// Digest of the messages alone, as used by scripted fixtures.
    pub fn prompt_digest(&self) -> String {
        prompt_digest(&self.messages)
    }
}

#[derive(Serialize)]
struct CanonMessage<'a> {
    content: &'a str,
    role: Role,
}

fn canon_messages(messages: &[Message]) -> Vec<CanonMessage<'_>> {
    messages
        .iter()
        .map(|m| CanonMessage {
            content: &m.content,
            role: m.role,
        })
        .collect()
}

/// SHA-256 over the canonical JSON of `messages`, independent of the model.
pub fn prompt_digest(messages: &[Message]) -> String {
    let json = serde_json::to_string(&canon_messages(messages)).expect("messages serialize");
    sha256_hex(json.as_bytes())
}

/// Hex digest identifying one logical model call.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CacheKey(pub String);

impl CacheKey {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for CacheKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}
