//! Strategy configuration, per-instance predictions and run records.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::corpus::Dataset;
use crate::digest::sha256_hex;
pub use crate::parse::Predicted;
use crate::request::{CacheKey, ModelSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    DirectZero,
    DirectFew,
    SimplifyThenAnswer,
    Cot,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [
        Strategy::DirectZero,
        Strategy::DirectFew,
        Strategy::SimplifyThenAnswer,
        Strategy::Cot,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::DirectZero => "direct_zero",
            Strategy::DirectFew => "direct_few",
            Strategy::SimplifyThenAnswer => "simplify_then_answer",
            Strategy::Cot => "cot",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.as_str() == s)
    }

    /// Strategies that produce a rewritten passage along the way.
    pub fn has_intermediate(self) -> bool {
        matches!(self, Strategy::SimplifyThenAnswer | Strategy::Cot)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyConfig {
    pub strategy: Strategy,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simplifier_model: Option<ModelSpec>,
    pub answerer_model: ModelSpec,
    pub cache_dir: String,
    /// Optional system message prepended to every prompt.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system_message: Option<String>,
}

impl StrategyConfig {
    pub fn new(
        strategy: Strategy,
        answerer_model: ModelSpec,
        cache_dir: impl Into<String>,
    ) -> Self {
        StrategyConfig {
            strategy,
            simplifier_model: None,
            answerer_model,
            cache_dir: cache_dir.into(),
            system_message: None,
        }
    }

    pub fn with_simplifier(mut self, model: ModelSpec) -> Self {
        self.simplifier_model = Some(model);
        self
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.strategy == Strategy::SimplifyThenAnswer && self.simplifier_model.is_none() {
            return Err("simplify_then_answer requires a simplifier model".to_string());
        }
        self.answerer_model.validate()?;
        if let Some(m) = &self.simplifier_model {
            m.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub instance_id: String,
    pub predicted: Predicted,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intermediate_literal: Option<String>,
    pub raw_output: String,
    /// Cache key of the call that produced the answer.
    pub prompt_digest: CacheKey,
    /// Set when a model call failed; the prediction then scores incorrect.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl Prediction {
    pub fn failed(instance_id: &str, prompt_digest: CacheKey, error: String) -> Self {
        Prediction {
            instance_id: instance_id.to_string(),
            predicted: Predicted::Unparseable,
            intermediate_literal: None,
            raw_output: String::new(),
            prompt_digest,
            error: Some(error),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RunError {
    #[error("run has {predictions} predictions for {instances} instances")]
    LengthMismatch {
        predictions: usize,
        instances: usize,
    },
    #[error("prediction {index} is for `{got}`, expected `{expected}`")]
    IdMismatch {
        index: usize,
        expected: String,
        got: String,
    },
    #[error("run was made on dataset {run}, not {dataset}")]
    DigestMismatch { run: String, dataset: String },
    #[error("malformed run file: {0}")]
    Malformed(String),
}

/// One strategy's predictions over a whole dataset plus provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: String,
    pub config: StrategyConfig,
    pub dataset_digest: String,
    pub predictions: Vec<Prediction>,
    pub correct: Vec<bool>,
}

/// The manifest persisted next to the prediction lines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub config: StrategyConfig,
    pub dataset_digest: String,
    pub n_predictions: usize,
    pub failed_ids: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct PredictionLine {
    #[serde(flatten)]
    prediction: Prediction,
    correct: bool,
}

impl RunRecord {
    /// Deterministic id from the config snapshot and dataset digest.
    pub fn run_id_for(config: &StrategyConfig, dataset_digest: &str) -> String {
        let cfg = serde_json::to_string(config).expect("config serializes");
        let id = sha256_hex(format!("{cfg}\n{dataset_digest}").as_bytes());
        format!("{}-{}", config.strategy.as_str(), &id[..16])
    }

    /// Builds a record, checking predictions line up with the dataset.
    pub fn new(
        config: StrategyConfig,
        dataset: &Dataset,
        predictions: Vec<Prediction>,
    ) -> Result<Self, RunError> {
        if predictions.len() != dataset.len() {
            return Err(RunError::LengthMismatch {
                predictions: predictions.len(),
                instances: dataset.len(),
            });
        }
        let mut correct = Vec::with_capacity(predictions.len());
        for (index, (p, inst)) in predictions.iter().zip(dataset.instances()).enumerate() {
            if p.instance_id != inst.id {
                return Err(RunError::IdMismatch {
                    index,
                    expected: inst.id.clone(),
                    got: p.instance_id.clone(),
                });
            }
            correct.push(p.predicted.is_correct(inst.gold_answer));
        }
        let dataset_digest = dataset.digest();
        Ok(RunRecord {
            run_id: Self::run_id_for(&config, &dataset_digest),
            config,
            dataset_digest,
            predictions,
            correct,
        })
    }

    pub fn failed_ids(&self) -> Vec<String> {
        self.predictions
            .iter()
            .filter(|p| p.error.is_some())
            .map(|p| p.instance_id.clone())
            .collect()
    }

    pub fn is_clean(&self) -> bool {
        self.predictions.iter().all(|p| p.error.is_none())
    }

    pub fn accuracy(&self) -> Option<f64> {
        crate::stats::accuracy(&self.correct).ok()
    }

    pub fn check_dataset(&self, dataset: &Dataset) -> Result<(), RunError> {
        let digest = dataset.digest();
        if digest != self.dataset_digest {
            return Err(RunError::DigestMismatch {
                run: self.dataset_digest.clone(),
                dataset: digest,
            });
        }
        Ok(())
    }

    pub fn manifest(&self) -> RunManifest {
        RunManifest {
            run_id: self.run_id.clone(),
            config: self.config.clone(),
            dataset_digest: self.dataset_digest.clone(),
            n_predictions: self.predictions.len(),
            failed_ids: self.failed_ids(),
        }
    }

    pub fn manifest_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.manifest()).expect("manifest serializes");
        s.push('\n');
        s
    }

    /// One prediction per line, each carrying its correctness bit.
    pub fn predictions_jsonl(&self) -> String {
        let mut out = String::new();
        for (p, &correct) in self.predictions.iter().zip(&self.correct) {
            let line = PredictionLine {
                prediction: p.clone(),
                correct,
            };
            out.push_str(&serde_json::to_string(&line).expect("prediction serializes"));
            out.push('\n');
        }
        out
    }

    pub fn from_persisted(manifest_json: &str, predictions_jsonl: &str) -> Result<Self, RunError> {
        let manifest: RunManifest = serde_json::from_str(manifest_json)
            .map_err(|e| RunError::Malformed(format!("manifest: {e}")))?;
        let mut predictions = Vec::new();
        let mut correct = Vec::new();
        for (i, line) in predictions_jsonl.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let p: PredictionLine = serde_json::from_str(line)
                .map_err(|e| RunError::Malformed(format!("line {}: {e}", i + 1)))?;
            predictions.push(p.prediction);
            correct.push(p.correct);
        }
        if predictions.len() != manifest.n_predictions {
            return Err(RunError::Malformed(format!(
                "manifest lists {} predictions, file has {}",
                manifest.n_predictions,
                predictions.len()
            )));
        }
        Ok(RunRecord {
            run_id: manifest.run_id,
            config: manifest.config,
            dataset_digest: manifest.dataset_digest,
            predictions,
            correct,
        })
    }

    /// SHA-256 over the persisted manifest and prediction lines.
    pub fn digest(&self) -> String {
        sha256_hex(format!("{}{}", self.manifest_json(), self.predictions_jsonl()).as_bytes())
    }
}
