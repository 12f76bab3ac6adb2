//! Dataset and raw-review file IO.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use figqa_core::corpus::{CorpusError, Dataset};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Corpus { path: PathBuf, source: CorpusError },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn read_text(path: &Path) -> Result<String, IoError> {
    fs::read_to_string(path).map_err(io_err(path))
}

/// Writes via a sibling temp file and rename, so readers never see a
/// partially written file.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), IoError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    let file_name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let tmp = path.with_file_name(format!(".{file_name}.{}.tmp", unique_suffix()));
    let mut f = fs::File::create(&tmp).map_err(io_err(&tmp))?;
    f.write_all(contents).map_err(io_err(&tmp))?;
    f.sync_all().map_err(io_err(&tmp))?;
    drop(f);
    fs::rename(&tmp, path).map_err(io_err(path))
}

pub(crate) fn unique_suffix() -> String {
    use std::sync::atomic::{AtomicU64, Ordering};
    static COUNTER: AtomicU64 = AtomicU64::new(0);
    format!(
        "{}-{}",
        std::process::id(),
        COUNTER.fetch_add(1, Ordering::Relaxed)
    )
}

pub fn load_dataset(path: &Path) -> Result<Dataset, IoError> {
    let text = read_text(path)?;
    Dataset::from_jsonl(&text).map_err(|source| IoError::Corpus {
        path: path.to_path_buf(),
        source,
    })
}

pub fn save_dataset(dataset: &Dataset, path: &Path) -> Result<(), IoError> {
    write_atomic(path, dataset.to_jsonl().as_bytes())
}

/// Serializes each item as one JSON line.
pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), IoError> {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(item).expect("record serializes"));
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())
}

pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, IoError> {
    let text = read_text(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| IoError::Format {
                path: path.to_path_buf(),
                message: format!("line {}: {e}", i + 1),
            })
        })
        .collect()
}

/// A raw document to mine for comparator sentences.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub text: String,
}

/// Reads a CSV or TSV file of reviews. The delimiter is a tab for `.tsv`
/// files and a comma otherwise. Rows without an id column get `row-<n>`.
pub fn read_reviews(
    path: &Path,
    text_column: &str,
    id_column: Option<&str>,
) -> Result<Vec<Document>, IoError> {
    let delimiter = match path.extension().and_then(|e| e.to_str()) {
        Some("tsv") | Some("tab") => b'\t',
        _ => b',',
    };
    let fmt_err = |message: String| IoError::Format {
        path: path.to_path_buf(),
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .flexible(true)
        .from_path(path)
        .map_err(|e| fmt_err(e.to_string()))?;
    let headers = reader
        .headers()
        .map_err(|e| fmt_err(e.to_string()))?
        .clone();
    let find = |name: &str| headers.iter().position(|h| h == name);
    let text_idx =
        find(text_column).ok_or_else(|| fmt_err(format!("no column named `{text_column}`")))?;
    let id_idx = match id_column {
        Some(c) => Some(find(c).ok_or_else(|| fmt_err(format!("no column named `{c}`")))?),
        None => None,
    };
    let mut docs = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| fmt_err(format!("row {}: {e}", row + 1)))?;
        let text = record.get(text_idx).unwrap_or_default().to_string();
        let id = match id_idx {
            Some(i) => record.get(i).unwrap_or_default().to_string(),
            None => format!("row-{}", row + 1),
        };
        docs.push(Document { id, text });
    }
    Ok(docs)
}

/// Reads a QA table with columns `id, source, split, context, question,
/// gold_answer` and optional `manual_literal_context` and
/// `figurativeness_scores` (scores separated by `;`). Values of the enum
/// columns are matched case-insensitively. Errors name the data row.
pub fn read_qa_csv(path: &Path) -> Result<Dataset, IoError> {
    let fmt_err = |message: String| IoError::Format {
        path: path.to_path_buf(),
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .from_path(path)
        .map_err(|e| fmt_err(e.to_string()))?;
    let headers = reader
        .headers()
        .map_err(|e| fmt_err(e.to_string()))?
        .clone();
    let mut lines = String::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| fmt_err(format!("row {}: {e}", row + 1)))?;
        let mut obj = serde_json::Map::new();
        for (h, v) in headers.iter().zip(record.iter()) {
            let value = match h {
                "source" | "split" | "gold_answer" => v.trim().to_lowercase().into(),
                "manual_literal_context" | "figurativeness_scores" if v.trim().is_empty() => {
                    continue
                }
                "figurativeness_scores" => {
                    let scores: Result<Vec<u64>, _> =
                        v.split(';').map(|s| s.trim().parse::<u64>()).collect();
                    let scores = scores.map_err(|e| {
                        fmt_err(format!("row {}: figurativeness_scores: {e}", row + 1))
                    })?;
                    serde_json::Value::from(scores)
                }
                _ => v.into(),
            };
            obj.insert(h.to_string(), value);
        }
        lines.push_str(&serde_json::Value::Object(obj).to_string());
        lines.push('\n');
    }
    // one JSON line per data row, so line numbers in errors are row numbers
    Dataset::from_jsonl(&lines).map_err(|source| IoError::Format {
        path: path.to_path_buf(),
        message: source.to_string().replacen("line", "row", 1),
    })
}
