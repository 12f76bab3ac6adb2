//! Training files built from synthetic QA pairs.

use std::path::Path;

use figqa_core::prompts::{qa_query_block, PromptTemplate, QaMode};
use figqa_core::{Answer, Message, Role};
use serde::{Deserialize, Serialize};

use crate::io::{read_text, write_atomic, IoError};
use crate::pipeline::SyntheticQA;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinetuneFormat {
    /// `{"prompt": <query block>, "completion": " Yes"}`.
    #[default]
    PromptCompletion,
    /// `{"messages": [user: zero-shot QA prompt, assistant: "Yes"]}`.
    Chat,
}

impl FinetuneFormat {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "prompt_completion" => Some(Self::PromptCompletion),
            "chat" => Some(Self::Chat),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct PromptCompletion {
    prompt: String,
    completion: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct ChatRecord {
    messages: Vec<Message>,
}

/// Context, question and answer recovered from a training record.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FinetuneExample {
    pub context: String,
    pub question: String,
    pub answer: Answer,
}

impl From<&SyntheticQA> for FinetuneExample {
    fn from(s: &SyntheticQA) -> Self {
        FinetuneExample {
            context: s.context.clone(),
            question: s.question.clone(),
            answer: s.answer,
        }
    }
}

fn line_for(item: &SyntheticQA, format: FinetuneFormat) -> String {
    match format {
        FinetuneFormat::PromptCompletion => serde_json::to_string(&PromptCompletion {
            prompt: qa_query_block(&item.context, &item.question),
            completion: format!(" {}", item.answer.label()),
        }),
        FinetuneFormat::Chat => {
            let mut messages = PromptTemplate::qa()
                .render_qa(&item.context, &item.question, QaMode::ZeroShot)
                .expect("synthetic items have non-empty context and question");
            messages.push(Message::assistant(item.answer.label()));
            serde_json::to_string(&ChatRecord { messages })
        }
    }
    .expect("record serializes")
}

/// Writes one record per item and returns how many were written.
pub fn emit_finetune_file(
    items: &[SyntheticQA],
    path: &Path,
    format: FinetuneFormat,
) -> Result<usize, IoError> {
    let mut out = String::new();
    for item in items {
        out.push_str(&line_for(item, format));
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())?;
    Ok(items.len())
}

/// Inverse of [`qa_query_block`].
fn split_query(text: &str) -> Option<(String, String)> {
    let start = text
        .rfind("Passage: ")
        .filter(|&i| i == 0 || text[..i].ends_with('\n'))?;
    let block = text[start + "Passage: ".len()..].strip_suffix("\nAnswer:")?;
    let (context, question) = block.rsplit_once("\nQuestion: ")?;
    Some((context.to_string(), question.to_string()))
}

pub fn read_finetune_file(
    path: &Path,
    format: FinetuneFormat,
) -> Result<Vec<FinetuneExample>, IoError> {
    let text = read_text(path)?;
    let bad = |line: usize, message: &str| IoError::Format {
        path: path.to_path_buf(),
        message: format!("line {line}: {message}"),
    };
    let mut out = Vec::new();
    for (i, line) in text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
    {
        let n = i + 1;
        let (prompt, completion) = match format {
            FinetuneFormat::PromptCompletion => {
                let r: PromptCompletion =
                    serde_json::from_str(line).map_err(|e| bad(n, &e.to_string()))?;
                (r.prompt, r.completion)
            }
            FinetuneFormat::Chat => {
                let r: ChatRecord =
                    serde_json::from_str(line).map_err(|e| bad(n, &e.to_string()))?;
                let user = r.messages.iter().find(|m| m.role == Role::User);
                let assistant = r.messages.iter().find(|m| m.role == Role::Assistant);
                match (user, assistant) {
                    (Some(u), Some(a)) => (u.content.clone(), a.content.clone()),
                    _ => return Err(bad(n, "expected a user and an assistant message")),
                }
            }
        };
        let (context, question) =
            split_query(&prompt).ok_or_else(|| bad(n, "prompt is not a QA query"))?;
        let answer = Answer::parse(&completion.trim().to_lowercase())
            .ok_or_else(|| bad(n, "completion is not Yes/No"))?;
        out.push(FinetuneExample {
            context,
            question,
            answer,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use figqa_core::CandidateContext;

    fn item(context: &str, question: &str, answer: Answer) -> SyntheticQA {
        SyntheticQA {
            context: context.into(),
            question: question.into(),
            answer,
            origin: CandidateContext {
                text: context.into(),
                matched_patterns: vec!["like".into()],
                origin: "r".into(),
            },
        }
    }

    #[test]
    fn both_formats_round_trip() {
        let items = vec![
            item(
                "The pearls sparkled like the moon.",
                "Were the earrings dull?",
                Answer::No,
            ),
            item("Fast as lightning.", "Was it quick?", Answer::Yes),
        ];
        let dir = tempfile::tempdir().unwrap();
        for format in [FinetuneFormat::PromptCompletion, FinetuneFormat::Chat] {
            let path = dir.path().join("ft.jsonl");
            assert_eq!(emit_finetune_file(&items, &path, format).unwrap(), 2);
            let text = std::fs::read_to_string(&path).unwrap();
            assert_eq!(text.lines().count(), 2);
            for line in text.lines() {
                serde_json::from_str::<serde_json::Value>(line).unwrap();
            }
            let back = read_finetune_file(&path, format).unwrap();
            let expected: Vec<FinetuneExample> = items.iter().map(Into::into).collect();
            assert_eq!(back, expected);
        }
    }

    #[test]
    fn prompt_completion_shape() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ft.jsonl");
        emit_finetune_file(
            &[item("A.", "B?", Answer::Yes)],
            &path,
            FinetuneFormat::PromptCompletion,
        )
        .unwrap();
        let v: serde_json::Value =
            serde_json::from_str(std::fs::read_to_string(&path).unwrap().trim()).unwrap();
        assert_eq!(v["prompt"], "Passage: A.\nQuestion: B?\nAnswer:");
        assert_eq!(v["completion"], " Yes");
    }

    #[test]
    fn empty_input_writes_empty_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ft.jsonl");
        assert_eq!(
            emit_finetune_file(&[], &path, FinetuneFormat::Chat).unwrap(),
            0
        );
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "");
        assert!(read_finetune_file(&path, FinetuneFormat::Chat)
            .unwrap()
            .is_empty());
    }
}
