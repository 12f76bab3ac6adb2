//! Human judgment batches: seeded task sampling, blind task dispensing,
//! append-only judgment storage, agreement and export.

mod server;
mod store;

pub use server::{router, serve};
pub use store::{AnnotationStore, COMPACT_EVERY};

use std::collections::BTreeMap;

use figqa_core::stats::{cohens_kappa, AgreementResult};
use figqa_core::{Dataset, FigurativenessScore, QAInstance};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    #[serde(rename = "figurativeness_1to4")]
    Figurativeness1To4,
    SimplificationCorrectIncorrect,
    QaAnswerYesNo,
}

impl TaskKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::Figurativeness1To4 => "figurativeness_1to4",
            TaskKind::SimplificationCorrectIncorrect => "simplification_correct_incorrect",
            TaskKind::QaAnswerYesNo => "qa_answer_yes_no",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [
            TaskKind::Figurativeness1To4,
            TaskKind::SimplificationCorrectIncorrect,
            TaskKind::QaAnswerYesNo,
        ]
        .into_iter()
        .find(|k| k.as_str() == s)
    }

    pub fn labels(self) -> &'static [&'static str] {
        match self {
            TaskKind::Figurativeness1To4 => &["1", "2", "3", "4"],
            TaskKind::SimplificationCorrectIncorrect => &["correct", "incorrect"],
            TaskKind::QaAnswerYesNo => &["yes", "no"],
        }
    }

    pub fn accepts(self, value: &str) -> bool {
        self.labels().contains(&value)
    }
}

/// What an annotator is shown. Never carries a gold answer or another
/// annotator's judgment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskPayload {
    pub context: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub question: Option<String>,
    /// Model-generated literal rewrite, shown next to the original.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generated_literal: Option<String>,
}

impl TaskPayload {
    pub fn check(&self, kind: TaskKind) -> Result<(), String> {
        if self.context.trim().is_empty() {
            return Err("payload context is empty".into());
        }
        let needs_question = kind == TaskKind::QaAnswerYesNo;
        let needs_literal = kind == TaskKind::SimplificationCorrectIncorrect;
        match (needs_question, &self.question) {
            (true, None) => return Err(format!("{} tasks need a question", kind.as_str())),
            (false, Some(_)) => return Err(format!("{} tasks take no question", kind.as_str())),
            _ => {}
        }
        match (needs_literal, &self.generated_literal) {
            (true, None) => Err(format!(
                "{} tasks need a generated literal text",
                kind.as_str()
            )),
            (false, Some(_)) => Err(format!("{} tasks take no generated text", kind.as_str())),
            _ => Ok(()),
        }
    }
}

/// An item offered for annotation, identified by its corpus id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchItem {
    pub item_id: String,
    #[serde(flatten)]
    pub payload: TaskPayload,
}

impl BatchItem {
    /// The instance as a task of `kind`; `literal` is the text under
    /// evaluation for simplification tasks.
    pub fn from_instance(inst: &QAInstance, kind: TaskKind, literal: Option<&str>) -> Self {
        BatchItem {
            item_id: inst.id.clone(),
            payload: TaskPayload {
                context: inst.context.clone(),
                question: (kind == TaskKind::QaAnswerYesNo).then(|| inst.question.clone()),
                generated_literal: if kind == TaskKind::SimplificationCorrectIncorrect {
                    literal.map(str::to_string)
                } else {
                    None
                },
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationTask {
    pub task_id: String,
    pub item_id: String,
    pub kind: TaskKind,
    pub payload: TaskPayload,
    pub assigned_annotators: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NewBatch {
    pub name: String,
    pub kind: TaskKind,
    pub annotators: Vec<String>,
    pub items: Vec<BatchItem>,
    #[serde(default)]
    pub sample_size: Option<usize>,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Batch {
    pub batch_id: String,
    pub kind: TaskKind,
    pub annotators: Vec<String>,
    pub seed: u64,
    pub population: usize,
    pub tasks: Vec<AnnotationTask>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgmentSubmission {
    pub task_id: String,
    pub annotator_id: String,
    pub value: String,
}

/// A stored judgment. Records are never rewritten; a resubmission gets a
/// new record that names the one it replaces.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Judgment {
    pub seq: u64,
    pub batch_id: String,
    pub task_id: String,
    pub annotator_id: String,
    pub value: String,
    /// Unix milliseconds.
    pub timestamp: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub supersedes: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ack {
    pub seq: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub supersedes: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum NextItem {
    Task {
        task: AnnotationTask,
        /// Zero-based position of the task in the batch.
        position: usize,
        total: usize,
        judged: usize,
    },
    Done {
        total: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub batch_id: String,
    pub kind: TaskKind,
    pub n_tasks: usize,
    pub annotators: Vec<String>,
    /// Tasks judged so far per annotator.
    pub progress: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AnnotationError {
    #[error("batch `{0}` already exists")]
    DuplicateBatch(String),
    #[error("unknown batch `{0}`")]
    UnknownBatch(String),
    #[error("unknown task `{0}`")]
    UnknownTask(String),
    #[error("annotator `{annotator}` is not assigned to batch `{batch}`")]
    UnknownAnnotator { batch: String, annotator: String },
    #[error("`{value}` is not a valid {kind} label (expected one of {expected})")]
    InvalidLabel {
        kind: &'static str,
        value: String,
        expected: String,
    },
    #[error("sample of {sample} requested from {population} items")]
    SampleTooLarge { sample: usize, population: usize },
    #[error("{0}")]
    Invalid(String),
    #[error("no task was judged by two annotators")]
    NoOverlap,
    #[error("storage: {0}")]
    Storage(String),
}

/// One line of a batch export: the current judgment of one annotator on
/// one task.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExportRecord {
    pub batch_id: String,
    pub task_id: String,
    pub item_id: String,
    pub kind: TaskKind,
    pub annotator_id: String,
    pub value: String,
    pub timestamp: u64,
    pub payload: TaskPayload,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairAgreement {
    pub annotator_a: String,
    pub annotator_b: String,
    pub n_overlap: usize,
    pub kappa: AgreementResult,
    /// Figurativeness only: kappa after mapping scores to `> 3` or not.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub binarized: Option<AgreementResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementSummary {
    pub batch_id: String,
    pub kind: TaskKind,
    /// Every annotator pair with at least one shared task, in name order.
    pub pairs: Vec<PairAgreement>,
    /// Label counts per annotator over current judgments.
    pub label_counts: BTreeMap<String, BTreeMap<String, usize>>,
}

/// Agreement over export records; the same computation backs the service
/// endpoint and the offline `agree` command.
pub fn agreement_from_records(
    batch_id: &str,
    kind: TaskKind,
    records: &[ExportRecord],
) -> Result<AgreementSummary, AnnotationError> {
    let mut by_annotator: BTreeMap<&str, BTreeMap<&str, &str>> = BTreeMap::new();
    let mut label_counts: BTreeMap<String, BTreeMap<String, usize>> = BTreeMap::new();
    for r in records {
        by_annotator
            .entry(&r.annotator_id)
            .or_default()
            .insert(&r.task_id, &r.value);
        *label_counts
            .entry(r.annotator_id.clone())
            .or_default()
            .entry(r.value.clone())
            .or_default() += 1;
    }
    let names: Vec<&str> = by_annotator.keys().copied().collect();
    let mut pairs = Vec::new();
    for (i, a) in names.iter().enumerate() {
        for b in &names[i + 1..] {
            let (ja, jb) = (&by_annotator[a], &by_annotator[b]);
            let shared: Vec<(&str, &str)> = ja
                .iter()
                .filter_map(|(task, va)| jb.get(task).map(|vb| (*va, *vb)))
                .collect();
            if shared.is_empty() {
                continue;
            }
            let (la, lb): (Vec<&str>, Vec<&str>) = shared.iter().copied().unzip();
            let kappa =
                cohens_kappa(&la, &lb).map_err(|e| AnnotationError::Invalid(e.to_string()))?;
            let binarized = if kind == TaskKind::Figurativeness1To4 {
                let bin = |v: &[&str]| -> Vec<bool> {
                    v.iter()
                        .map(|s| s.parse::<u8>().is_ok_and(|x| x > 3))
                        .collect()
                };
                Some(
                    cohens_kappa(&bin(&la), &bin(&lb))
                        .map_err(|e| AnnotationError::Invalid(e.to_string()))?,
                )
            } else {
                None
            };
            pairs.push(PairAgreement {
                annotator_a: a.to_string(),
                annotator_b: b.to_string(),
                n_overlap: shared.len(),
                kappa,
                binarized,
            });
        }
    }
    if pairs.is_empty() {
        return Err(AnnotationError::NoOverlap);
    }
    Ok(AgreementSummary {
        batch_id: batch_id.to_string(),
        kind,
        pairs,
        label_counts,
    })
}

/// Per-item score tuples from a figurativeness export, ordered by
/// annotator id.
pub fn scores_from_export(
    records: &[ExportRecord],
) -> Result<BTreeMap<String, FigurativenessScore>, AnnotationError> {
    let mut per_item: BTreeMap<&str, BTreeMap<&str, u8>> = BTreeMap::new();
    for r in records
        .iter()
        .filter(|r| r.kind == TaskKind::Figurativeness1To4)
    {
        let v: u8 = r.value.parse().map_err(|_| {
            AnnotationError::Invalid(format!("score `{}` on {}", r.value, r.task_id))
        })?;
        per_item
            .entry(&r.item_id)
            .or_default()
            .insert(&r.annotator_id, v);
    }
    per_item
        .into_iter()
        .map(|(item, scores)| {
            FigurativenessScore::new(scores.into_values().collect())
                .map(|s| (item.to_string(), s))
                .map_err(AnnotationError::Invalid)
        })
        .collect()
}

/// `dataset` with figurativeness scores replaced from `scores`.
pub fn apply_scores(
    dataset: &Dataset,
    scores: &BTreeMap<String, FigurativenessScore>,
) -> Result<Dataset, figqa_core::CorpusError> {
    let instances = dataset
        .instances()
        .iter()
        .map(|inst| {
            let mut inst = inst.clone();
            if let Some(s) = scores.get(&inst.id) {
                inst.figurativeness = Some(s.clone());
            }
            inst
        })
        .collect();
    Dataset::new(instances)
}
