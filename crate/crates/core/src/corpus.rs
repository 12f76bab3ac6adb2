//! Dataset schema, line-delimited serialization, comparator-sentence
//! extraction, figurativeness filtering and binning.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::digest::sha256_hex;

/// Errors raised while validating or parsing corpus records.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CorpusError {
    #[error("line {line}: malformed record: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: field `{field}`: {message}")]
    InvalidField {
        line: usize,
        field: &'static str,
        message: String,
    },
    #[error("line {line}: duplicate id `{id}`")]
    DuplicateId { line: usize, id: String },
    #[error("instance `{id}` has no figurativeness score")]
    MissingScore { id: String },
    #[error("n_bins must be at least 1")]
    NoBins,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Amazon,
    Yelp,
}

impl Source {
    pub const ALL: [Source; 2] = [Source::Amazon, Source::Yelp];

    pub fn as_str(self) -> &'static str {
        match self {
            Source::Amazon => "amazon",
            Source::Yelp => "yelp",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "amazon" => Some(Source::Amazon),
            "yelp" => Some(Source::Yelp),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Figurative,
    NonFigurative,
}

impl Split {
    pub const ALL: [Split; 2] = [Split::Figurative, Split::NonFigurative];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Figurative => "figurative",
            Split::NonFigurative => "non_figurative",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "figurative" => Some(Split::Figurative),
            "non_figurative" => Some(Split::NonFigurative),
            _ => None,
        }
    }
}

/// A gold or parsed yes/no answer. There is no third class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Answer {
    Yes,
    No,
}

impl Answer {
    pub fn as_str(self) -> &'static str {
        match self {
            Answer::Yes => "yes",
            Answer::No => "no",
        }
    }

    /// Capitalized form used in prompts and completions.
    pub fn label(self) -> &'static str {
        match self {
            Answer::Yes => "Yes",
            Answer::No => "No",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "yes" => Some(Answer::Yes),
            "no" => Some(Answer::No),
            _ => None,
        }
    }
}

/// Per-annotator figurativeness ratings on the 1..=4 scale.
///
/// The average is kept as an exact rational (`sum / count`) so that the
/// class thresholds and bin boundaries never suffer rounding.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FigurativenessScore {
    annotator_scores: Vec<u8>,
}

impl FigurativenessScore {
    pub const MIN: u8 = 1;
    pub const MAX: u8 = 4;

    pub fn new(annotator_scores: Vec<u8>) -> Result<Self, String> {
        if annotator_scores.is_empty() {
            return Err("at least one annotator score is required".to_string());
        }
        if let Some(bad) = annotator_scores
            .iter()
            .find(|s| !(Self::MIN..=Self::MAX).contains(*s))
        {
            return Err(format!("score {bad} outside 1..=4"));
        }
        Ok(Self { annotator_scores })
    }

    pub fn annotator_scores(&self) -> &[u8] {
        &self.annotator_scores
    }

    pub fn sum(&self) -> u64 {
        self.annotator_scores.iter().map(|&s| u64::from(s)).sum()
    }

    pub fn count(&self) -> u64 {
        self.annotator_scores.len() as u64
    }

    pub fn average(&self) -> f64 {
        self.sum() as f64 / self.count() as f64
    }

    /// Exact comparison of the average against `num / den`.
    pub fn cmp_average(&self, num: u64, den: u64) -> Ordering {
        (u128::from(self.sum()) * u128::from(den))
            .cmp(&(u128::from(num) * u128::from(self.count())))
    }

    /// Average strictly above 3.
    pub fn is_figurative(&self) -> bool {
        self.cmp_average(3, 1) == Ordering::Greater
    }

    /// Average at or below 2. The band (2, 3] belongs to neither class.
    pub fn is_non_figurative(&self) -> bool {
        self.cmp_average(2, 1) != Ordering::Greater
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QAInstance {
    pub id: String,
    pub source: Source,
    pub split: Split,
    pub context: String,
    pub question: String,
    pub gold_answer: Answer,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manual_literal_context: Option<String>,
    #[serde(
        default,
        rename = "figurativeness_scores",
        skip_serializing_if = "Option::is_none"
    )]
    pub figurativeness: Option<FigurativenessScore>,
}

impl QAInstance {
    /// Checks the invariants not already enforced by the field types.
    pub fn validate(&self) -> Result<(), (&'static str, String)> {
        if self.id.is_empty() {
            return Err(("id", "must be non-empty".to_string()));
        }
        let q = self.question.trim_end();
        if q.is_empty() || !q.ends_with('?') {
            return Err(("question", "must be non-empty and end with '?'".to_string()));
        }
        if self.manual_literal_context.is_some() && self.split != Split::Figurative {
            return Err((
                "manual_literal_context",
                "only allowed on figurative instances".to_string(),
            ));
        }
        Ok(())
    }
}

/// An ordered, id-unique list of instances.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    instances: Vec<QAInstance>,
}

impl Dataset {
    pub fn new(instances: Vec<QAInstance>) -> Result<Self, CorpusError> {
        let mut seen = BTreeSet::new();
        for (i, inst) in instances.iter().enumerate() {
            inst.validate()
                .map_err(|(field, message)| CorpusError::InvalidField {
                    line: i + 1,
                    field,
                    message,
                })?;
            if !seen.insert(inst.id.as_str()) {
                return Err(CorpusError::DuplicateId {
                    line: i + 1,
                    id: inst.id.clone(),
                });
            }
        }
        Ok(Self { instances })
    }

    pub fn instances(&self) -> &[QAInstance] {
        &self.instances
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&QAInstance> {
        self.instances.iter().find(|i| i.id == id)
    }

    pub fn into_instances(self) -> Vec<QAInstance> {
        self.instances
    }

    /// Parses line-delimited JSON records. Blank lines are skipped but still
    /// counted, so reported line numbers match the file.
    pub fn from_jsonl(text: &str) -> Result<Self, CorpusError> {
        let mut instances = Vec::new();
        let mut seen = BTreeSet::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            if raw.trim().is_empty() {
                continue;
            }
            let inst = parse_record(raw, line)?;
            if !seen.insert(inst.id.clone()) {
                return Err(CorpusError::DuplicateId { line, id: inst.id });
            }
            instances.push(inst);
        }
        Ok(Self { instances })
    }

    /// One JSON object per line, fields in schema order, trailing newline.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for inst in &self.instances {
            out.push_str(&serde_json::to_string(inst).expect("instance serializes"));
            out.push('\n');
        }
        out
    }

    /// SHA-256 of the canonical serialization.
    pub fn digest(&self) -> String {
        sha256_hex(self.to_jsonl().as_bytes())
    }
}

fn str_field<'a>(
    obj: &'a Map<String, Value>,
    field: &'static str,
    line: usize,
) -> Result<&'a str, CorpusError> {
    match obj.get(field) {
        Some(Value::String(s)) => Ok(s),
        Some(_) => Err(CorpusError::InvalidField {
            line,
            field,
            message: "expected a string".to_string(),
        }),
        None => Err(CorpusError::InvalidField {
            line,
            field,
            message: "missing".to_string(),
        }),
    }
}

fn enum_field<T>(
    obj: &Map<String, Value>,
    field: &'static str,
    line: usize,
    parse: fn(&str) -> Option<T>,
    allowed: &str,
) -> Result<T, CorpusError> {
    let s = str_field(obj, field, line)?;
    parse(s).ok_or_else(|| CorpusError::InvalidField {
        line,
        field,
        message: format!("invalid value `{s}`, expected one of {allowed}"),
    })
}

fn parse_record(raw: &str, line: usize) -> Result<QAInstance, CorpusError> {
    let value: Value = serde_json::from_str(raw).map_err(|e| CorpusError::Malformed {
        line,
        message: e.to_string(),
    })?;
    let Value::Object(obj) = value else {
        return Err(CorpusError::Malformed {
            line,
            message: "expected a JSON object".to_string(),
        });
    };
    let manual_literal_context = match obj.get("manual_literal_context") {
        None | Some(Value::Null) => None,
        Some(Value::String(s)) => Some(s.clone()),
        Some(_) => {
            return Err(CorpusError::InvalidField {
                line,
                field: "manual_literal_context",
                message: "expected a string".to_string(),
            })
        }
    };
    let figurativeness = match obj.get("figurativeness_scores") {
        None | Some(Value::Null) => None,
        Some(Value::Array(items)) => {
            let invalid = |message: String| CorpusError::InvalidField {
                line,
                field: "figurativeness_scores",
                message,
            };
            let scores = items
                .iter()
                .map(|v| {
                    v.as_u64()
                        .and_then(|n| u8::try_from(n).ok())
                        .ok_or_else(|| invalid(format!("non-integer score {v}")))
                })
                .collect::<Result<Vec<_>, _>>()?;
            Some(FigurativenessScore::new(scores).map_err(invalid)?)
        }
        Some(_) => {
            return Err(CorpusError::InvalidField {
                line,
                field: "figurativeness_scores",
                message: "expected an array of integers".to_string(),
            })
        }
    };
    let inst = QAInstance {
        id: str_field(&obj, "id", line)?.to_string(),
        source: enum_field(&obj, "source", line, Source::parse, "amazon|yelp")?,
        split: enum_field(
            &obj,
            "split",
            line,
            Split::parse,
            "figurative|non_figurative",
        )?,
        context: str_field(&obj, "context", line)?.to_string(),
        question: str_field(&obj, "question", line)?.to_string(),
        gold_answer: enum_field(&obj, "gold_answer", line, Answer::parse, "yes|no")?,
        manual_literal_context,
        figurativeness,
    };
    inst.validate()
        .map_err(|(field, message)| CorpusError::InvalidField {
            line,
            field,
            message,
        })?;
    Ok(inst)
}

/// Yes/no counts for one (source, split) row.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub yes: usize,
    pub no: usize,
}

impl SplitCounts {
    pub fn total(&self) -> usize {
        self.yes + self.no
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatsRow {
    pub source: Source,
    pub split: Split,
    pub counts: SplitCounts,
}

/// Rows in fixed order: amazon fig, amazon non-fig, yelp fig, yelp non-fig.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatsTable {
    pub rows: Vec<StatsRow>,
}

impl StatsTable {
    pub fn get(&self, source: Source, split: Split) -> SplitCounts {
        self.rows
            .iter()
            .find(|r| r.source == source && r.split == split)
            .map(|r| r.counts)
            .unwrap_or_default()
    }

    pub fn total(&self) -> usize {
        self.rows.iter().map(|r| r.counts.total()).sum()
    }
}

impl fmt::Display for StatsTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<8} {:<15} {:>5} {:>5} {:>6}",
            "source", "split", "yes", "no", "total"
        )?;
        for r in &self.rows {
            writeln!(
                f,
                "{:<8} {:<15} {:>5} {:>5} {:>6}",
                r.source.as_str(),
                r.split.as_str(),
                r.counts.yes,
                r.counts.no,
                r.counts.total()
            )?;
        }
        Ok(())
    }
}

pub fn split_stats(dataset: &Dataset) -> StatsTable {
    let mut rows = Vec::new();
    for source in Source::ALL {
        for split in Split::ALL {
            rows.push(StatsRow {
                source,
                split,
                counts: SplitCounts::default(),
            });
        }
    }
    for inst in dataset.instances() {
        let row = rows
            .iter_mut()
            .find(|r| r.source == inst.source && r.split == inst.split)
            .expect("every source/split pair has a row");
        match inst.gold_answer {
            Answer::Yes => row.counts.yes += 1,
            Answer::No => row.counts.no += 1,
        }
    }
    StatsTable { rows }
}

/// Default comparator patterns.
pub const COMPARATOR_PATTERNS: [&str; 3] = ["like", "as", "than"];

/// A sentence that contains at least one comparator pattern.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateContext {
    pub text: String,
    /// Patterns in order of first occurrence in `text`.
    pub matched_patterns: Vec<String>,
    pub origin: String,
}

/// Lossy sentence segmentation: a sentence ends at `.`, `!` or `?` when the
/// next character is whitespace or the end of input. Abbreviations are not
/// special-cased.
pub fn split_sentences(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut chars = text.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        if matches!(c, '.' | '!' | '?') {
            let end = i + c.len_utf8();
            let boundary = match chars.peek() {
                None => true,
                Some(&(_, next)) => next.is_whitespace(),
            };
            if boundary {
                let s = text[start..end].trim();
                if !s.is_empty() {
                    out.push(s);
                }
                start = end;
            }
        }
    }
    let tail = text[start..].trim();
    if !tail.is_empty() {
        out.push(tail);
    }
    out
}

fn words(text: &str) -> impl Iterator<Item = &str> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
}

/// Sentences of `documents` (given as `(id, text)`) that contain any of
/// `patterns` as a whole word. Output follows document then sentence order.
pub fn extract_comparator_sentences<S: AsRef<str>>(
    documents: &[(S, S)],
    patterns: &[&str],
    case_sensitive: bool,
) -> Vec<CandidateContext> {
    let norm = |s: &str| {
        if case_sensitive {
            s.to_string()
        } else {
            s.to_lowercase()
        }
    };
    let wanted: Vec<(String, &str)> = patterns.iter().map(|p| (norm(p), *p)).collect();
    let mut out = Vec::new();
    for (origin, text) in documents {
        for sentence in split_sentences(text.as_ref()) {
            let mut matched: Vec<String> = Vec::new();
            for word in words(sentence) {
                let w = norm(word);
                if let Some((_, original)) = wanted.iter().find(|(p, _)| *p == w) {
                    if !matched.iter().any(|m| m == original) {
                        matched.push(original.to_string());
                    }
                }
            }
            if !matched.is_empty() {
                out.push(CandidateContext {
                    text: sentence.to_string(),
                    matched_patterns: matched,
                    origin: origin.as_ref().to_string(),
                });
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FigurativenessMode {
    Figurative,
    NonFigurative,
}

/// Keeps records whose score average falls in the requested class.
pub fn filter_by_figurativeness<T: Clone>(
    records: &[(T, FigurativenessScore)],
    mode: FigurativenessMode,
) -> Vec<(T, FigurativenessScore)> {
    records
        .iter()
        .filter(|(_, s)| match mode {
            FigurativenessMode::Figurative => s.is_figurative(),
            FigurativenessMode::NonFigurative => s.is_non_figurative(),
        })
        .cloned()
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinMode {
    /// Equal-width bins over the observed `[min, max]` average range.
    #[default]
    EqualWidth,
    /// Equal-count bins over instances sorted by average.
    Quantile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FigurativenessBin {
    pub lower: f64,
    pub upper: f64,
    pub ids: Vec<String>,
}

/// Exact rational `num / den` with `den > 0`.
#[derive(Debug, Clone, Copy)]
struct Ratio {
    num: i128,
    den: i128,
}

impl Ratio {
    fn of(score: &FigurativenessScore) -> Self {
        Ratio {
            num: i128::from(score.sum() as i64),
            den: i128::from(score.count() as i64),
        }
    }

    fn cmp(self, other: Ratio) -> Ordering {
        (self.num * other.den).cmp(&(other.num * self.den))
    }

    fn to_f64(self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

/// Partitions scored instances into `n_bins` bins.
///
/// In equal-width mode a value on a boundary goes to the lower bin, except
/// the global maximum which always lands in the top bin. Empty bins are kept.
pub fn bin_by_figurativeness(
    instances: &[QAInstance],
    n_bins: usize,
    mode: BinMode,
) -> Result<Vec<FigurativenessBin>, CorpusError> {
    if n_bins == 0 {
        return Err(CorpusError::NoBins);
    }
    let mut scored = Vec::with_capacity(instances.len());
    for inst in instances {
        let score = inst
            .figurativeness
            .as_ref()
            .ok_or_else(|| CorpusError::MissingScore {
                id: inst.id.clone(),
            })?;
        scored.push((inst.id.as_str(), Ratio::of(score)));
    }
    match mode {
        BinMode::EqualWidth => Ok(equal_width_bins(&scored, n_bins)),
        BinMode::Quantile => Ok(quantile_bins(scored, n_bins)),
    }
}

fn equal_width_bins(scored: &[(&str, Ratio)], n_bins: usize) -> Vec<FigurativenessBin> {
    let Some(&(_, first)) = scored.first() else {
        return (0..n_bins)
            .map(|_| FigurativenessBin {
                lower: 0.0,
                upper: 0.0,
                ids: Vec::new(),
            })
            .collect();
    };
    let (lo, hi) = scored.iter().fold((first, first), |(lo, hi), &(_, r)| {
        (
            if r.cmp(lo) == Ordering::Less { r } else { lo },
            if r.cmp(hi) == Ordering::Greater {
                r
            } else {
                hi
            },
        )
    });
    let (lo_f, hi_f) = (lo.to_f64(), hi.to_f64());
    let width = (hi_f - lo_f) / n_bins as f64;
    let mut bins: Vec<FigurativenessBin> = (0..n_bins)
        .map(|i| FigurativenessBin {
            lower: lo_f + width * i as f64,
            upper: if i + 1 == n_bins {
                hi_f
            } else {
                lo_f + width * (i + 1) as f64
            },
            ids: Vec::new(),
        })
        .collect();
    let n = n_bins as i128;
    // v <= lo + (k+1)(hi-lo)/n  <=>  n (v - lo) <= (k+1)(hi - lo), all scaled
    // by the positive denominators v.den * lo.den * hi.den.
    let span = hi.num * lo.den - lo.num * hi.den; // (hi - lo) * lo.den * hi.den
    for &(id, v) in scored {
        let offset = (v.num * lo.den - lo.num * v.den) * hi.den; // (v - lo) * v.den*lo.den*hi.den
        let idx = (0..n_bins)
            .find(|&k| n * offset <= (k as i128 + 1) * span * v.den)
            .unwrap_or(n_bins - 1);
        bins[idx].ids.push(id.to_string());
    }
    bins
}

fn quantile_bins(mut scored: Vec<(&str, Ratio)>, n_bins: usize) -> Vec<FigurativenessBin> {
    // stable: ties keep input order
    scored.sort_by(|a, b| a.1.cmp(b.1));
    let len = scored.len();
    let base = len / n_bins;
    let extra = len % n_bins;
    let mut bins = Vec::with_capacity(n_bins);
    let mut start = 0;
    for i in 0..n_bins {
        let size = base + usize::from(i < extra);
        let chunk = &scored[start..start + size];
        start += size;
        let (lower, upper) = match (chunk.first(), chunk.last()) {
            (Some(a), Some(b)) => (a.1.to_f64(), b.1.to_f64()),
            _ => (f64::NAN, f64::NAN),
        };
        bins.push(FigurativenessBin {
            lower,
            upper,
            ids: chunk.iter().map(|(id, _)| id.to_string()).collect(),
        });
    }
    bins
}
