//! Few-shot prompt templates for literal rewriting, yes/no answering,
//! chain-of-thought answering and synthetic question generation.
//!
//! Exemplars are stored as plain-text data files: an instruction paragraph
//! followed by blank-line separated blocks of `Label: text` lines. A
//! rendered prompt is the instruction, the exemplar blocks and the query
//! block joined by blank lines, packaged as a single user message.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::request::Message;

const SIMPLIFY_DATA: &str = include_str!("../data/simplify.txt");
const QA_DATA: &str = include_str!("../data/qa.txt");
const COT_DATA: &str = include_str!("../data/cot.txt");
const SYNTHETIC_DATA: &str = include_str!("../data/synthetic.txt");

const SYNTHETIC_TYPO: &str = "Were the earrings dull? the?";
const SYNTHETIC_TYPO_FIXED: &str = "Were the earrings dull?";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PromptError {
    #[error("slot `{0}` must be non-empty")]
    EmptySlot(&'static str),
    #[error("exemplar data: {0}")]
    BadExemplars(String),
    #[error("prompt needs ~{estimate} tokens, budget is {budget}")]
    OverBudget { estimate: usize, budget: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptKind {
    Simplify,
    Qa,
    Cot,
    Synthetic,
}

impl PromptKind {
    /// Label sequence every exemplar of this kind must follow.
    pub fn labels(self) -> &'static [&'static str] {
        match self {
            PromptKind::Simplify => &["Input", "Output"],
            PromptKind::Qa => &["Passage", "Question", "Answer"],
            PromptKind::Cot => &["Passage", "Question", "Simplified Passage", "Answer"],
            PromptKind::Synthetic => &["Text", "Question", "Answer"],
        }
    }

    pub fn exemplar_count(self) -> usize {
        match self {
            PromptKind::Simplify => 7,
            PromptKind::Qa | PromptKind::Cot => 2,
            PromptKind::Synthetic => 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QaMode {
    ZeroShot,
    FewShot,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FewShotExample {
    pub parts: Vec<(String, String)>,
}

impl FewShotExample {
    fn render(&self, out: &mut String) {
        for (i, (label, text)) in self.parts.iter().enumerate() {
            if i > 0 {
                out.push('\n');
            }
            push_labeled(out, label, text);
        }
    }

    pub fn get(&self, label: &str) -> Option<&str> {
        self.parts
            .iter()
            .find(|(l, _)| l == label)
            .map(|(_, t)| t.as_str())
    }
}

fn push_labeled(out: &mut String, label: &str, text: &str) {
    out.push_str(label);
    out.push(':');
    if !text.is_empty() {
        out.push(' ');
        out.push_str(text);
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub kind: PromptKind,
    pub instruction: String,
    pub exemplars: Vec<FewShotExample>,
    /// Optional system message; prompts are a single user turn by default.
    pub system_message: Option<String>,
}

impl PromptTemplate {
    /// Parses the exemplar data-file format and checks every block's labels.
    pub fn parse(kind: PromptKind, data: &str) -> Result<Self, PromptError> {
        let data = data.replace("\r\n", "\n");
        let mut blocks = data.trim_end_matches('\n').split("\n\n");
        let instruction = blocks
            .next()
            .filter(|s| !s.trim().is_empty())
            .ok_or_else(|| PromptError::BadExemplars("missing instruction".to_string()))?
            .to_string();
        let mut exemplars = Vec::new();
        for block in blocks {
            let mut parts = Vec::new();
            for line in block.lines() {
                let (label, text) = line.split_once(": ").ok_or_else(|| {
                    PromptError::BadExemplars(alloc::format!("unlabeled line `{line}`"))
                })?;
                parts.push((label.to_string(), text.to_string()));
            }
            let labels: Vec<&str> = parts.iter().map(|(l, _)| l.as_str()).collect();
            if labels != kind.labels() {
                return Err(PromptError::BadExemplars(alloc::format!(
                    "labels {labels:?} do not match {:?}",
                    kind.labels()
                )));
            }
            exemplars.push(FewShotExample { parts });
        }
        Ok(PromptTemplate {
            kind,
            instruction,
            exemplars,
            system_message: None,
        })
    }

    fn builtin(kind: PromptKind, data: &str) -> Self {
        let t = Self::parse(kind, data).expect("bundled exemplars are well-formed");
        debug_assert_eq!(t.exemplars.len(), kind.exemplar_count());
        t
    }

    pub fn simplify() -> Self {
        Self::builtin(PromptKind::Simplify, SIMPLIFY_DATA)
    }

    pub fn qa() -> Self {
        Self::builtin(PromptKind::Qa, QA_DATA)
    }

    pub fn cot() -> Self {
        Self::builtin(PromptKind::Cot, COT_DATA)
    }

    /// The generation template with its exemplar stored verbatim, including
    /// the stray `the?` in the last question.
    pub fn synthetic() -> Self {
        Self::builtin(PromptKind::Synthetic, SYNTHETIC_DATA)
    }

    /// Same as [`PromptTemplate::synthetic`] with the stray `the?` removed.
    pub fn synthetic_normalized() -> Self {
        let mut t = Self::synthetic();
        for ex in &mut t.exemplars {
            for (_, text) in &mut ex.parts {
                if text == SYNTHETIC_TYPO {
                    *text = SYNTHETIC_TYPO_FIXED.to_string();
                }
            }
        }
        t
    }

    pub fn builtin_for(kind: PromptKind) -> Self {
        match kind {
            PromptKind::Simplify => Self::simplify(),
            PromptKind::Qa => Self::qa(),
            PromptKind::Cot => Self::cot(),
            PromptKind::Synthetic => Self::synthetic(),
        }
    }

    /// A copy with the exemplar at `index` removed (for held-out replays).
    pub fn without_exemplar(&self, index: usize) -> Self {
        let mut t = self.clone();
        if index < t.exemplars.len() {
            t.exemplars.remove(index);
        }
        t
    }

    pub fn with_system_message(mut self, system: impl Into<String>) -> Self {
        self.system_message = Some(system.into());
        self
    }

    fn package(&self, body: String) -> Vec<Message> {
        let mut messages = Vec::with_capacity(2);
        if let Some(system) = &self.system_message {
            messages.push(Message::system(system.clone()));
        }
        messages.push(Message::user(body));
        messages
    }

    fn body(&self, with_exemplars: bool, query: &[(&str, &str)]) -> String {
        let mut out = self.instruction.clone();
        if with_exemplars {
            for ex in &self.exemplars {
                out.push_str("\n\n");
                ex.render(&mut out);
            }
        }
        out.push_str("\n\n");
        for (i, (label, text)) in query.iter().enumerate() {
            if i > 0 {
                out.push('\n');
            }
            push_labeled(&mut out, label, text);
        }
        out
    }

    pub fn render_simplify(&self, context: &str) -> Result<Vec<Message>, PromptError> {
        non_empty(context, "context")?;
        Ok(self.package(self.body(true, &[("Input", context), ("Output", "")])))
    }

    pub fn render_qa(
        &self,
        context: &str,
        question: &str,
        mode: QaMode,
    ) -> Result<Vec<Message>, PromptError> {
        non_empty(context, "context")?;
        non_empty(question, "question")?;
        Ok(self.package(self.body(
            mode == QaMode::FewShot,
            &[("Passage", context), ("Question", question), ("Answer", "")],
        )))
    }

    pub fn render_cot(&self, context: &str, question: &str) -> Result<Vec<Message>, PromptError> {
        non_empty(context, "context")?;
        non_empty(question, "question")?;
        Ok(self.package(self.body(
            true,
            &[
                ("Passage", context),
                ("Question", question),
                ("Simplified Passage", ""),
            ],
        )))
    }

    pub fn render_synthetic(&self, context: &str) -> Result<Vec<Message>, PromptError> {
        non_empty(context, "context")?;
        Ok(self.package(self.body(true, &[("Text", context), ("Question", "")])))
    }
}

fn non_empty(s: &str, slot: &'static str) -> Result<(), PromptError> {
    if s.trim().is_empty() {
        Err(PromptError::EmptySlot(slot))
    } else {
        Ok(())
    }
}

/// The bare query block `Passage: ..\nQuestion: ..\nAnswer:`.
pub fn qa_query_block(context: &str, question: &str) -> String {
    let mut out = String::new();
    push_labeled(&mut out, "Passage", context);
    out.push('\n');
    push_labeled(&mut out, "Question", question);
    out.push('\n');
    push_labeled(&mut out, "Answer", "");
    out
}

pub fn render_simplify_prompt(context: &str) -> Result<Vec<Message>, PromptError> {
    PromptTemplate::simplify().render_simplify(context)
}

pub fn render_qa_prompt(
    context: &str,
    question: &str,
    mode: QaMode,
) -> Result<Vec<Message>, PromptError> {
    PromptTemplate::qa().render_qa(context, question, mode)
}

pub fn render_cot_prompt(context: &str, question: &str) -> Result<Vec<Message>, PromptError> {
    PromptTemplate::cot().render_cot(context, question)
}

pub fn render_synthetic_prompt(context: &str) -> Result<Vec<Message>, PromptError> {
    PromptTemplate::synthetic().render_synthetic(context)
}

/// Rough token estimate: one token per four bytes, rounded up, plus a
/// constant per message. Monotone in every message length.
pub fn estimate_tokens(messages: &[Message]) -> usize {
    messages
        .iter()
        .map(|m| m.content.len().div_ceil(4) + 4)
        .sum()
}

pub fn check_budget(messages: &[Message], budget: usize) -> Result<usize, PromptError> {
    let estimate = estimate_tokens(messages);
    if estimate > budget {
        Err(PromptError::OverBudget { estimate, budget })
    } else {
        Ok(estimate)
    }
}
