use std::collections::BTreeMap;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use figqa_core::digest::is_hex_digest;
use figqa_core::request::prompt_digest;
use figqa_core::{CompletionRequest, Message};
use serde::{Deserialize, Serialize};

use super::{Backend, CompletionResponse, GatewayError};

/// Canned responses keyed by the prompt digest of the request messages.
/// Stored on disk as a flat JSON object `{ "<digest>": "<response>" }`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Fixture {
    pub responses: BTreeMap<String, String>,
}

impl Fixture {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, messages: &[Message], response: impl Into<String>) -> String {
        let digest = prompt_digest(messages);
        self.responses.insert(digest.clone(), response.into());
        digest
    }

    pub fn len(&self) -> usize {
        self.responses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let fixture: Fixture =
            serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
        if let Some(bad) = fixture.responses.keys().find(|k| !is_hex_digest(k)) {
            return Err(format!(
                "{}: `{bad}` is not a prompt digest",
                path.display()
            ));
        }
        Ok(fixture)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("fixture serializes")
    }
}

/// What to do with a prompt the fixture does not know.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum UnknownPrompt {
    Error,
    Fallback(String),
}

pub struct ScriptedBackend {
    fixture: Fixture,
    unknown: UnknownPrompt,
    calls: AtomicUsize,
}

impl ScriptedBackend {
    pub fn strict(fixture: Fixture) -> Self {
        ScriptedBackend {
            fixture,
            unknown: UnknownPrompt::Error,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn with_fallback(fixture: Fixture, text: impl Into<String>) -> Self {
        ScriptedBackend {
            fixture,
            unknown: UnknownPrompt::Fallback(text.into()),
            calls: AtomicUsize::new(0),
        }
    }

    /// Answers every prompt with `text`.
    pub fn fallback(text: impl Into<String>) -> Self {
        Self::with_fallback(Fixture::new(), text)
    }

    /// Parses `<path>` or `<path>?fallback=<text>`.
    pub fn from_uri(spec: &str) -> Result<Self, String> {
        let (path, fallback) = match spec.split_once("?fallback=") {
            Some((p, f)) => (p, Some(f)),
            None => (spec, None),
        };
        let fixture = Fixture::load(Path::new(path))?;
        Ok(match fallback {
            Some(f) => Self::with_fallback(fixture, f),
            None => Self::strict(fixture),
        })
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl Backend for ScriptedBackend {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, GatewayError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let digest = request.prompt_digest();
        let text = match (self.fixture.responses.get(&digest), &self.unknown) {
            (Some(t), _) => t.clone(),
            (None, UnknownPrompt::Fallback(t)) => t.clone(),
            (None, UnknownPrompt::Error) => return Err(GatewayError::UnknownPrompt { digest }),
        };
        Ok(CompletionResponse {
            text,
            finish_reason: "stop".to_string(),
            from_cache: false,
            latency_ms: 0,
            origin_latency_ms: None,
            attempts: 1,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use figqa_core::ModelSpec;

    fn req(prompt: &str) -> CompletionRequest {
        CompletionRequest::new(
            ModelSpec::qa_preset("scripted:x", "m"),
            vec![Message::user(prompt)],
            "t",
        )
    }

    #[test]
    fn fixture_passthrough() {
        let mut f = Fixture::new();
        f.insert(&[Message::user("P1")], "Yes");
        let b = ScriptedBackend::strict(f);
        assert_eq!(b.complete(&req("P1")).unwrap().text, "Yes");
    }

    #[test]
    fn strict_unknown_names_digest() {
        let b = ScriptedBackend::strict(Fixture::new());
        let err = b.complete(&req("P2")).unwrap_err();
        assert_eq!(
            err,
            GatewayError::UnknownPrompt {
                digest: prompt_digest(&[Message::user("P2")])
            }
        );
    }

    #[test]
    fn fallback_mode() {
        let b = ScriptedBackend::with_fallback(Fixture::new(), "No");
        assert_eq!(b.complete(&req("anything")).unwrap().text, "No");
    }

    #[test]
    fn uri_and_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.json");
        let mut f = Fixture::new();
        f.insert(&[Message::user("P1")], "Yes");
        std::fs::write(&path, f.to_json()).unwrap();
        let strict = ScriptedBackend::from_uri(path.to_str().unwrap()).unwrap();
        assert_eq!(strict.complete(&req("P1")).unwrap().text, "Yes");
        assert!(strict.complete(&req("P9")).is_err());
        let loose = ScriptedBackend::from_uri(&format!("{}?fallback=No", path.display())).unwrap();
        assert_eq!(loose.complete(&req("P9")).unwrap().text, "No");
        std::fs::write(&path, r#"{"not-a-digest": "x"}"#).unwrap();
        assert!(Fixture::load(&path).is_err());
    }
}
