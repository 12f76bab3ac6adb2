//! Normalizing free-text model output into yes/no answers.
//!
//! Label stripping is a plain prefix check on the trimmed text, never a
//! pattern search, so content that merely mentions a label is left alone.

use alloc::string::{String, ToString};

use serde::{Deserialize, Serialize};

use crate::corpus::Answer;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Predicted {
    Yes,
    No,
    Unparseable,
}

impl Predicted {
    pub fn answer(self) -> Option<Answer> {
        match self {
            Predicted::Yes => Some(Answer::Yes),
            Predicted::No => Some(Answer::No),
            Predicted::Unparseable => None,
        }
    }

    pub fn is_correct(self, gold: Answer) -> bool {
        self.answer() == Some(gold)
    }
}

impl From<Answer> for Predicted {
    fn from(a: Answer) -> Self {
        match a {
            Answer::Yes => Predicted::Yes,
            Answer::No => Predicted::No,
        }
    }
}

/// Removes a leading `label:` (ASCII case-insensitive) after trimming.
pub fn strip_leading_label<'a>(text: &'a str, label: &str) -> &'a str {
    let t = text.trim_start();
    let n = label.len();
    if t.len() > n && t.is_char_boundary(n) && t[..n].eq_ignore_ascii_case(label) {
        if let Some(rest) = t[n..].strip_prefix(':') {
            return rest.trim_start();
        }
    }
    t
}

/// Maps output whose first alphabetic token is `yes` or `no` (any case) to
/// that answer; everything else is unparseable. A leading `Answer:` label
/// is skipped.
pub fn parse_yes_no(text: &str) -> Predicted {
    let body = strip_leading_label(text, "Answer");
    let first = body
        .split(|c: char| !c.is_alphabetic())
        .find(|w| !w.is_empty());
    match first {
        Some(w) if w.eq_ignore_ascii_case("yes") => Predicted::Yes,
        Some(w) if w.eq_ignore_ascii_case("no") => Predicted::No,
        _ => Predicted::Unparseable,
    }
}

/// Byte offset of a `label` that begins a line, if any.
fn find_line_label(text: &str, label: &str) -> Option<usize> {
    let mut from = 0;
    while let Some(pos) = text[from..].find(label) {
        let at = from + pos;
        if text[..at].trim_end_matches([' ', '\t']).is_empty()
            || text[..at].trim_end_matches([' ', '\t']).ends_with('\n')
        {
            return Some(at);
        }
        from = at + label.len();
    }
    None
}

/// Splits a chain-of-thought completion into the rewritten passage and the
/// parsed answer. The prompt already ends with `Simplified Passage:`, so the
/// completion usually starts with the passage itself.
pub fn parse_cot_output(text: &str) -> (String, Predicted) {
    const SIMPLIFIED: &str = "Simplified Passage:";
    const ANSWER: &str = "Answer:";
    let body = match text.find(SIMPLIFIED) {
        Some(i) => &text[i + SIMPLIFIED.len()..],
        None => text,
    };
    match find_line_label(body, ANSWER) {
        Some(i) => (
            body[..i].trim().to_string(),
            parse_yes_no(&body[i + ANSWER.len()..]),
        ),
        None => (body.trim().to_string(), Predicted::Unparseable),
    }
}

/// Why a generated question/answer pair was discarded.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    #[error("no Question label")]
    NoQuestionLabel,
    #[error("no Answer label")]
    NoAnswerLabel,
    #[error("question lacks '?'")]
    QuestionLacksMark,
    #[error("unparseable answer")]
    UnparseableAnswer,
}

/// Parses `Question: ...\nAnswer: ...` from a generation completion.
///
/// The prompt ends with `Question:`, so a completion that omits the label
/// but has an `Answer:` line is read as a continuation of it.
pub fn parse_synthetic_output(text: &str) -> Result<(String, Answer), DropReason> {
    const QUESTION: &str = "Question:";
    const ANSWER: &str = "Answer:";
    let body = match find_line_label(text, QUESTION) {
        Some(i) => &text[i + QUESTION.len()..],
        None => {
            if find_line_label(text, ANSWER).is_none() {
                return Err(DropReason::NoQuestionLabel);
            }
            text
        }
    };
    let a = find_line_label(body, ANSWER).ok_or(DropReason::NoAnswerLabel)?;
    let question = body[..a].trim();
    if question.is_empty() || !question.ends_with('?') {
        return Err(DropReason::QuestionLacksMark);
    }
    let answer = parse_yes_no(&body[a + ANSWER.len()..])
        .answer()
        .ok_or(DropReason::UnparseableAnswer)?;
    Ok((question.to_string(), answer))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn yes_no_examples() {
        assert_eq!(parse_yes_no("Yes"), Predicted::Yes);
        assert_eq!(parse_yes_no(" Answer: No."), Predicted::No);
        assert_eq!(
            parse_yes_no("It depends on the sauce"),
            Predicted::Unparseable
        );
        assert_eq!(parse_yes_no(""), Predicted::Unparseable);
        assert_eq!(parse_yes_no("\"YES!\" I think"), Predicted::Yes);
        assert_eq!(parse_yes_no("answer: yes"), Predicted::Yes);
        assert_eq!(parse_yes_no("Nope"), Predicted::Unparseable);
        assert_eq!(parse_yes_no("Answer"), Predicted::Unparseable);
    }

    #[test]
    fn label_strip_is_prefix_only() {
        assert_eq!(strip_leading_label("Output: text", "Output"), "text");
        assert_eq!(
            strip_leading_label("The Output: text", "Output"),
            "The Output: text"
        );
        assert_eq!(
            strip_leading_label("Outputs are fine", "Output"),
            "Outputs are fine"
        );
    }

    #[test]
    fn cot_examples() {
        assert_eq!(
            parse_cot_output("The camera stopped working every few minutes.\nAnswer: No"),
            (
                "The camera stopped working every few minutes.".to_string(),
                Predicted::No
            )
        );
        assert_eq!(
            parse_cot_output("Answer: Yes"),
            (String::new(), Predicted::Yes)
        );
        assert_eq!(
            parse_cot_output("some text with no label"),
            (
                "some text with no label".to_string(),
                Predicted::Unparseable
            )
        );
        assert_eq!(
            parse_cot_output("Simplified Passage: It was rich.\nAnswer: Yes"),
            ("It was rich.".to_string(), Predicted::Yes)
        );
    }

    #[test]
    fn synthetic_examples() {
        assert_eq!(
            parse_synthetic_output("Question: Were the earrings dull?\nAnswer: No"),
            Ok(("Were the earrings dull?".to_string(), Answer::No))
        );
        assert_eq!(
            parse_synthetic_output(" Was the sauce hot?\nAnswer: Yes"),
            Ok(("Was the sauce hot?".to_string(), Answer::Yes))
        );
        assert_eq!(
            parse_synthetic_output("nice pearls"),
            Err(DropReason::NoQuestionLabel)
        );
        assert_eq!(
            parse_synthetic_output("Question: Was it good?"),
            Err(DropReason::NoAnswerLabel)
        );
        assert_eq!(
            parse_synthetic_output("Question: Was it good\nAnswer: Yes"),
            Err(DropReason::QuestionLacksMark)
        );
        assert_eq!(
            parse_synthetic_output("Question: Was it good?\nAnswer: maybe"),
            Err(DropReason::UnparseableAnswer)
        );
    }

    proptest! {
        #[test]
        fn canonical_labels_round_trip(yes in any::<bool>(), pad in "[ \t\n]{0,3}", punct in "[.!]?") {
            let a = if yes { Answer::Yes } else { Answer::No };
            let rendered = alloc::format!("{pad}{}{punct}", a.label());
            prop_assert_eq!(parse_yes_no(&rendered), Predicted::from(a));
            let labeled = alloc::format!("Answer: {}", a.label());
            prop_assert_eq!(parse_yes_no(&labeled), Predicted::from(a));
        }
    }
}
