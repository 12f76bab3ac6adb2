//! TOML run configuration. Command-line flags override the file, and the
//! file overrides the built-in defaults.

use std::path::{Path, PathBuf};

use figqa_core::request::DEFAULT_API_KEY_ENV;
use figqa_core::{ModelSpec, WireFormat};
use serde::{Deserialize, Serialize};

/// Model name used for `scripted:` endpoints when none is configured.
pub const SCRIPTED_MODEL: &str = "scripted";

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {message}")]
    Read { path: PathBuf, message: String },
    #[error("missing config key `{0}`")]
    Missing(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// One model section, e.g. `[answerer]`. Every key is optional so that a
/// flag can supply it instead.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub endpoint_url: Option<String>,
    pub model_name: Option<String>,
    pub temperature: Option<f64>,
    pub max_tokens: Option<u32>,
    /// Name of the environment variable holding the API key.
    pub api_key_env: Option<String>,
    pub wire: Option<WireFormat>,
}

impl ModelSection {
    /// Keys set in `over` win.
    pub fn overlay(&self, over: &ModelSection) -> ModelSection {
        ModelSection {
            endpoint_url: over
                .endpoint_url
                .clone()
                .or_else(|| self.endpoint_url.clone()),
            model_name: over.model_name.clone().or_else(|| self.model_name.clone()),
            temperature: over.temperature.or(self.temperature),
            max_tokens: over.max_tokens.or(self.max_tokens),
            api_key_env: over
                .api_key_env
                .clone()
                .or_else(|| self.api_key_env.clone()),
            wire: over.wire.or(self.wire),
        }
    }

    /// Fills unset keys from `preset`; `section` names missing keys.
    pub fn resolve(
        &self,
        section: &str,
        preset: fn(String, String) -> ModelSpec,
    ) -> Result<ModelSpec, ConfigError> {
        let endpoint = self
            .endpoint_url
            .clone()
            .ok_or_else(|| ConfigError::Missing(format!("{section}.endpoint_url")))?;
        // fixtures are keyed on prompts only, so a scripted endpoint needs no model
        let model = match (&self.model_name, endpoint.starts_with("scripted:")) {
            (Some(m), _) => m.clone(),
            (None, true) => SCRIPTED_MODEL.to_string(),
            (None, false) => return Err(ConfigError::Missing(format!("{section}.model_name"))),
        };
        let mut spec = preset(endpoint, model);
        if let Some(t) = self.temperature {
            spec.temperature = t;
        }
        if let Some(m) = self.max_tokens {
            spec.max_tokens = m;
        }
        spec.api_key_source = self
            .api_key_env
            .clone()
            .unwrap_or_else(|| DEFAULT_API_KEY_ENV.to_string());
        if let Some(w) = self.wire {
            spec.wire = w;
        }
        spec.validate()
            .map_err(|e| ConfigError::Invalid(format!("[{section}] {e}")))?;
        Ok(spec)
    }
}

pub fn simplify_preset(e: String, m: String) -> ModelSpec {
    ModelSpec::simplify_preset(e, m)
}
pub fn qa_preset(e: String, m: String) -> ModelSpec {
    ModelSpec::qa_preset(e, m)
}
pub fn cot_preset(e: String, m: String) -> ModelSpec {
    ModelSpec::cot_preset(e, m)
}
pub fn synthetic_preset(e: String, m: String) -> ModelSpec {
    ModelSpec::synthetic_preset(e, m)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub strategy: Option<String>,
    pub cache_dir: Option<String>,
    pub jobs: Option<usize>,
    pub system_message: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StatsSection {
    pub n_resamples: Option<usize>,
    pub seed: Option<u64>,
    pub alpha: Option<f64>,
    /// `resamples` or `per_item`.
    pub pairing: Option<String>,
    /// `wilcox` or `pratt`.
    pub zero_method: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExtractSection {
    pub patterns: Option<Vec<String>>,
    pub case_sensitive: Option<bool>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default)]
    pub answerer: ModelSection,
    #[serde(default)]
    pub simplifier: ModelSection,
    #[serde(default)]
    pub generator: ModelSection,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub stats: StatsSection,
    #[serde(default)]
    pub extract: ExtractSection,
}

impl FileConfig {
    pub fn parse(text: &str, path: &Path) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Read {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Read {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        Self::parse(&text, path)
    }

    /// The file at `path`, or an empty config when no path is given.
    pub fn load_optional(path: Option<&Path>) -> Result<Self, ConfigError> {
        path.map(Self::load)
            .transpose()
            .map(Option::unwrap_or_default)
    }
}
