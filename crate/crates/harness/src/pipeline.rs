//! Answering strategies, resumable experiment runs and synthetic QA
//! generation on top of the [`Gateway`].

use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use figqa_core::parse::{
    parse_cot_output, parse_synthetic_output, parse_yes_no, strip_leading_label,
};
use figqa_core::prompts::{PromptError, PromptTemplate, QaMode};
use figqa_core::run::RunError;
use figqa_core::{
    Answer, CacheKey, CandidateContext, CompletionRequest, Dataset, Message, ModelSpec, Prediction,
    QAInstance, RunRecord, Strategy, StrategyConfig,
};
use serde::{Deserialize, Serialize};

use crate::gateway::{Gateway, GatewayError};
use crate::io::{read_text, write_atomic, IoError};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const PREDICTIONS_FILE: &str = "predictions.jsonl";

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("instance {id}: {source}")]
    Prompt { id: String, source: PromptError },
    #[error("instance {id}: {source}")]
    Gateway { id: String, source: GatewayError },
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Run(#[from] RunError),
    #[error(transparent)]
    Io(#[from] IoError),
}

/// Templates for one run, with the optional system message applied.
#[derive(Debug, Clone)]
pub struct Templates {
    pub simplify: PromptTemplate,
    pub qa: PromptTemplate,
    pub cot: PromptTemplate,
}

impl Templates {
    pub fn builtin(system_message: Option<&str>) -> Self {
        let apply = |t: PromptTemplate| match system_message {
            Some(s) => t.with_system_message(s),
            None => t,
        };
        Templates {
            simplify: apply(PromptTemplate::simplify()),
            qa: apply(PromptTemplate::qa()),
            cot: apply(PromptTemplate::cot()),
        }
    }
}

fn call(
    gateway: &Gateway,
    id: &str,
    model: &ModelSpec,
    messages: Vec<Message>,
    tag: &str,
) -> (CacheKey, Result<String, PipelineError>) {
    let request = CompletionRequest::new(model.clone(), messages, tag);
    let key = request.cache_key();
    let result = gateway
        .cached_complete(&request)
        .map(|r| r.text)
        .map_err(|source| PipelineError::Gateway {
            id: id.to_string(),
            source,
        });
    (key, result)
}

fn prompt_err(id: &str) -> impl FnOnce(PromptError) -> PipelineError + '_ {
    move |source| PipelineError::Prompt {
        id: id.to_string(),
        source,
    }
}

/// Model text with a leading `Output:` label and surrounding whitespace
/// removed.
pub fn clean_simplification(text: &str) -> String {
    strip_leading_label(text.trim(), "Output")
        .trim()
        .to_string()
}

/// Rewrites `context` literally; `id` only labels errors.
pub fn simplify_context(
    id: &str,
    context: &str,
    simplifier: &ModelSpec,
    template: &PromptTemplate,
    gateway: &Gateway,
) -> Result<String, PipelineError> {
    let messages = template.render_simplify(context).map_err(prompt_err(id))?;
    call(gateway, id, simplifier, messages, "simplify")
        .1
        .map(|t| clean_simplification(&t))
}

/// Runs the configured strategy on one instance. Failures are recorded on
/// the returned prediction rather than raised.
pub fn answer_instance(
    instance: &QAInstance,
    config: &StrategyConfig,
    templates: &Templates,
    gateway: &Gateway,
) -> Prediction {
    let id = instance.id.as_str();
    let answerer = &config.answerer_model;
    let qa = |context: &str,
              mode: QaMode|
     -> Result<(CacheKey, Result<String, PipelineError>), PipelineError> {
        let messages = templates
            .qa
            .render_qa(context, &instance.question, mode)
            .map_err(prompt_err(id))?;
        Ok(call(gateway, id, answerer, messages, "qa"))
    };
    let failed = |key: CacheKey, e: PipelineError, literal: Option<String>| {
        let mut p = Prediction::failed(id, key, e.to_string());
        p.intermediate_literal = literal;
        p
    };
    let no_key = || CacheKey(String::new());
    let direct = |mode: QaMode, literal: Option<String>, context: &str| match qa(context, mode) {
        Err(e) => failed(no_key(), e, literal),
        Ok((key, Err(e))) => failed(key, e, literal),
        Ok((key, Ok(text))) => Prediction {
            instance_id: id.to_string(),
            predicted: parse_yes_no(&text),
            intermediate_literal: literal,
            raw_output: text,
            prompt_digest: key,
            error: None,
        },
    };
    match config.strategy {
        Strategy::DirectZero => direct(QaMode::ZeroShot, None, &instance.context),
        Strategy::DirectFew => direct(QaMode::FewShot, None, &instance.context),
        Strategy::SimplifyThenAnswer => {
            let Some(simplifier) = config.simplifier_model.as_ref() else {
                return failed(
                    no_key(),
                    PipelineError::Config(
                        "simplify_then_answer requires a simplifier model".into(),
                    ),
                    None,
                );
            };
            let messages = match templates.simplify.render_simplify(&instance.context) {
                Ok(m) => m,
                Err(e) => return failed(no_key(), prompt_err(id)(e), None),
            };
            match call(gateway, id, simplifier, messages, "simplify") {
                (key, Err(e)) => failed(key, e, None),
                (_, Ok(text)) => {
                    let literal = clean_simplification(&text);
                    direct(QaMode::FewShot, Some(literal.clone()), &literal)
                }
            }
        }
        Strategy::Cot => {
            let messages = match templates
                .cot
                .render_cot(&instance.context, &instance.question)
            {
                Ok(m) => m,
                Err(e) => return failed(no_key(), prompt_err(id)(e), None),
            };
            match call(gateway, id, answerer, messages, "cot") {
                (key, Err(e)) => failed(key, e, None),
                (key, Ok(text)) => {
                    let (literal, predicted) = parse_cot_output(&text);
                    Prediction {
                        instance_id: id.to_string(),
                        predicted,
                        intermediate_literal: Some(literal),
                        raw_output: text,
                        prompt_digest: key,
                        error: None,
                    }
                }
            }
        }
    }
}

/// Applies `f` to every item with at most `jobs` workers; results come back
/// in input order.
pub fn ordered_parallel_map<T, R, F>(items: &[T], jobs: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync,
{
    let slots: Vec<Mutex<Option<R>>> = items.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let workers = jobs.clamp(1, items.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= items.len() {
                    break;
                }
                let r = f(&items[i]);
                *slots[i].lock().expect("slot lock") = Some(r);
            });
        }
    });
    slots
        .into_iter()
        .map(|s| {
            s.into_inner()
                .expect("slot lock")
                .expect("every slot filled")
        })
        .collect()
}

/// Answers every instance of `dataset`. Cached calls are reused, so a rerun
/// resumes where an interrupted one stopped.
pub fn run_experiment(
    dataset: &Dataset,
    config: &StrategyConfig,
    gateway: &Gateway,
) -> Result<RunRecord, PipelineError> {
    config.validate().map_err(PipelineError::Config)?;
    let templates = Templates::builtin(config.system_message.as_deref());
    let predictions = ordered_parallel_map(dataset.instances(), gateway.jobs(), |inst| {
        answer_instance(inst, config, &templates, gateway)
    });
    for p in predictions.iter().filter(|p| p.error.is_some()) {
        log::warn!(
            "{}: {}",
            p.instance_id,
            p.error.as_deref().unwrap_or_default()
        );
    }
    Ok(RunRecord::new(config.clone(), dataset, predictions)?)
}

pub fn persist_run(record: &RunRecord, dir: &Path) -> Result<(), IoError> {
    write_atomic(
        &dir.join(PREDICTIONS_FILE),
        record.predictions_jsonl().as_bytes(),
    )?;
    write_atomic(&dir.join(MANIFEST_FILE), record.manifest_json().as_bytes())
}

pub fn load_run(dir: &Path) -> Result<RunRecord, PipelineError> {
    let manifest = read_text(&dir.join(MANIFEST_FILE))?;
    let predictions = read_text(&dir.join(PREDICTIONS_FILE))?;
    Ok(RunRecord::from_persisted(&manifest, &predictions)?)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntheticQA {
    pub context: String,
    pub question: String,
    pub answer: Answer,
    pub origin: CandidateContext,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DroppedCandidate {
    pub origin: CandidateContext,
    pub reason: String,
    pub raw_output: String,
    /// The model call failed, as opposed to returning malformed text.
    #[serde(default)]
    pub call_failed: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntheticReport {
    pub items: Vec<SyntheticQA>,
    pub dropped: Vec<DroppedCandidate>,
    pub yes: usize,
    pub no: usize,
}

impl SyntheticReport {
    pub fn total(&self) -> usize {
        self.items.len()
    }
}

/// Asks the model for one question/answer pair per candidate and keeps the
/// well-formed ones.
pub fn generate_synthetic_qa(
    candidates: &[CandidateContext],
    model: &ModelSpec,
    template: &PromptTemplate,
    gateway: &Gateway,
) -> SyntheticReport {
    let outcomes = ordered_parallel_map(candidates, gateway.jobs(), |c| {
        let messages = match template.render_synthetic(&c.text) {
            Ok(m) => m,
            Err(e) => return Err((e.to_string(), String::new(), false)),
        };
        match call(gateway, &c.origin, model, messages, "synthetic").1 {
            Err(e) => Err((e.to_string(), String::new(), true)),
            Ok(text) => match parse_synthetic_output(&text) {
                Ok((question, answer)) => Ok(SyntheticQA {
                    context: c.text.clone(),
                    question,
                    answer,
                    origin: c.clone(),
                }),
                Err(reason) => Err((reason.to_string(), text, false)),
            },
        }
    });
    let mut report = SyntheticReport::default();
    for (c, outcome) in candidates.iter().zip(outcomes) {
        match outcome {
            Ok(item) => {
                match item.answer {
                    Answer::Yes => report.yes += 1,
                    Answer::No => report.no += 1,
                }
                report.items.push(item);
            }
            Err((reason, raw_output, call_failed)) => {
                log::info!("dropped candidate from {}: {reason}", c.origin);
                report.dropped.push(DroppedCandidate {
                    origin: c.clone(),
                    reason,
                    raw_output,
                    call_failed,
                });
            }
        }
    }
    if report.items.is_empty() && !candidates.is_empty() {
        log::warn!("every synthetic candidate was dropped");
    }
    report
}
