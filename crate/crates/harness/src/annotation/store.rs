use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::RwLock;
use std::time::{SystemTime, UNIX_EPOCH};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    agreement_from_records, Ack, AgreementSummary, AnnotationError, AnnotationTask, Batch,
    BatchSummary, ExportRecord, Judgment, JudgmentSubmission, NewBatch, NextItem,
};
use crate::io::{write_atomic, write_jsonl};

/// Appends between automatic compactions.
pub const COMPACT_EVERY: u64 = 1000;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
enum LogEvent {
    Batch(Batch),
    Judgment(Judgment),
}

#[derive(Default)]
struct State {
    batches: BTreeMap<String, Batch>,
    /// task id -> (batch id, task position)
    task_index: HashMap<String, (String, usize)>,
    judgments: Vec<Judgment>,
    /// (task id, annotator) -> index of the current judgment
    current: HashMap<(String, String), usize>,
    next_seq: u64,
    since_compact: u64,
    log: Option<File>,
}

impl State {
    fn apply(&mut self, event: LogEvent) {
        match event {
            LogEvent::Batch(b) => {
                for (i, t) in b.tasks.iter().enumerate() {
                    self.task_index
                        .insert(t.task_id.clone(), (b.batch_id.clone(), i));
                }
                self.batches.insert(b.batch_id.clone(), b);
            }
            LogEvent::Judgment(j) => {
                self.next_seq = self.next_seq.max(j.seq + 1);
                let key = (j.task_id.clone(), j.annotator_id.clone());
                let replace = self
                    .current
                    .get(&key)
                    .is_none_or(|&i| self.judgments[i].seq < j.seq);
                self.judgments.push(j);
                if replace {
                    self.current.insert(key, self.judgments.len() - 1);
                }
            }
        }
    }

    fn judged_by(&self, batch: &Batch, annotator: &str) -> usize {
        batch
            .tasks
            .iter()
            .filter(|t| {
                self.current
                    .contains_key(&(t.task_id.clone(), annotator.to_string()))
            })
            .count()
    }
}

/// Batches and judgments, persisted as one JSON event per line.
pub struct AnnotationStore {
    path: Option<PathBuf>,
    state: RwLock<State>,
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

fn storage<E: std::fmt::Display>(e: E) -> AnnotationError {
    AnnotationError::Storage(e.to_string())
}

fn event_line(event: &LogEvent) -> String {
    let mut s = serde_json::to_string(event).expect("log event serializes");
    s.push('\n');
    s
}

impl AnnotationStore {
    /// A store that keeps nothing on disk.
    pub fn in_memory() -> Self {
        AnnotationStore {
            path: None,
            state: RwLock::new(State::default()),
        }
    }

    /// Replays the log at `path`, creating it if missing. A torn final line
    /// left by a crash is discarded and the log rewritten.
    pub fn open(path: &Path) -> Result<Self, AnnotationError> {
        let mut state = State::default();
        let mut torn = false;
        if path.exists() {
            let text = std::fs::read_to_string(path).map_err(storage)?;
            let lines: Vec<&str> = text.lines().collect();
            for (i, line) in lines.iter().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                match serde_json::from_str::<LogEvent>(line) {
                    Ok(ev) => state.apply(ev),
                    Err(e) if i + 1 == lines.len() && !text.ends_with('\n') => {
                        log::warn!("{}: dropping torn final record: {e}", path.display());
                        torn = true;
                    }
                    Err(e) => {
                        return Err(AnnotationError::Storage(format!(
                            "{} line {}: {e}",
                            path.display(),
                            i + 1
                        )))
                    }
                }
            }
            if !torn && !text.is_empty() && !text.ends_with('\n') {
                torn = true;
            }
        }
        let store = AnnotationStore {
            path: Some(path.to_path_buf()),
            state: RwLock::new(state),
        };
        if torn {
            store.compact()?;
        }
        store.reopen_log()?;
        Ok(store)
    }

    fn reopen_log(&self) -> Result<(), AnnotationError> {
        if let Some(path) = &self.path {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).map_err(storage)?;
            }
            let f = OpenOptions::new()
                .create(true)
                .append(true)
                .open(path)
                .map_err(storage)?;
            self.state.write().expect("state lock").log = Some(f);
        }
        Ok(())
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    fn archive_path(path: &Path) -> PathBuf {
        let mut name = path.file_name().unwrap_or_default().to_os_string();
        name.push(".superseded.jsonl");
        path.with_file_name(name)
    }

    /// Rewrites the log with batches and current judgments only. Superseded
    /// judgments move to `<log>.superseded.jsonl`, so nothing is lost.
    pub fn compact(&self) -> Result<(), AnnotationError> {
        let Some(path) = &self.path else {
            return Ok(());
        };
        let mut st = self.state.write().expect("state lock");
        let live: BTreeSet<usize> = st.current.values().copied().collect();
        let mut body = String::new();
        for b in st.batches.values() {
            body.push_str(&event_line(&LogEvent::Batch(b.clone())));
        }
        let mut archived = String::new();
        let mut kept = Vec::new();
        for (i, j) in st.judgments.iter().enumerate() {
            let line = event_line(&LogEvent::Judgment(j.clone()));
            if live.contains(&i) {
                body.push_str(&line);
                kept.push(j.clone());
            } else {
                archived.push_str(&line);
            }
        }
        if !archived.is_empty() {
            let mut f = OpenOptions::new()
                .create(true)
                .append(true)
                .open(Self::archive_path(path))
                .map_err(storage)?;
            f.write_all(archived.as_bytes()).map_err(storage)?;
            f.sync_all().map_err(storage)?;
        }
        write_atomic(path, body.as_bytes()).map_err(storage)?;
        st.judgments.clear();
        st.current.clear();
        for j in kept {
            let key = (j.task_id.clone(), j.annotator_id.clone());
            st.judgments.push(j);
            let idx = st.judgments.len() - 1;
            st.current.insert(key, idx);
        }
        st.since_compact = 0;
        st.log = None;
        drop(st);
        self.reopen_log()
    }

    fn append(&self, st: &mut State, event: LogEvent) -> Result<(), AnnotationError> {
        if let Some(f) = st.log.as_mut() {
            f.write_all(event_line(&event).as_bytes())
                .map_err(storage)?;
            f.sync_data().map_err(storage)?;
        }
        st.apply(event);
        st.since_compact += 1;
        Ok(())
    }

    fn maybe_compact(&self) -> Result<(), AnnotationError> {
        let due = self.state.read().expect("state lock").since_compact >= COMPACT_EVERY;
        if due {
            self.compact()?;
        }
        Ok(())
    }

    /// Creates a batch from a seeded uniform sample of `req.items` and
    /// returns its id. Sampled tasks keep the order of the input items.
    pub fn create_batch(&self, req: NewBatch) -> Result<String, AnnotationError> {
        let name = req.name.trim().to_string();
        if name.is_empty() || name.contains('/') {
            return Err(AnnotationError::Invalid(
                "batch name must be non-empty and contain no `/`".into(),
            ));
        }
        if req.items.is_empty() {
            return Err(AnnotationError::Invalid(
                "a batch needs at least one item".into(),
            ));
        }
        if req.annotators.is_empty() {
            return Err(AnnotationError::Invalid(
                "a batch needs at least one annotator".into(),
            ));
        }
        let unique: BTreeSet<&String> = req.annotators.iter().collect();
        if unique.len() != req.annotators.len()
            || req.annotators.iter().any(|a| a.trim().is_empty())
        {
            return Err(AnnotationError::Invalid(
                "annotator ids must be distinct and non-empty".into(),
            ));
        }
        let mut seen = BTreeSet::new();
        for item in &req.items {
            if !seen.insert(item.item_id.as_str()) {
                return Err(AnnotationError::Invalid(format!(
                    "duplicate item id `{}`",
                    item.item_id
                )));
            }
            item.payload
                .check(req.kind)
                .map_err(|e| AnnotationError::Invalid(format!("item `{}`: {e}", item.item_id)))?;
        }
        let population = req.items.len();
        let chosen: Vec<usize> = match req.sample_size {
            None => (0..population).collect(),
            Some(k) if k > population => {
                return Err(AnnotationError::SampleTooLarge {
                    sample: k,
                    population,
                })
            }
            Some(k) => {
                let mut rng = ChaCha8Rng::seed_from_u64(req.seed);
                let mut idx = rand::seq::index::sample(&mut rng, population, k).into_vec();
                idx.sort_unstable();
                idx
            }
        };
        let tasks = chosen
            .into_iter()
            .map(|i| {
                let item = &req.items[i];
                AnnotationTask {
                    task_id: format!("{name}/{}", item.item_id),
                    item_id: item.item_id.clone(),
                    kind: req.kind,
                    payload: item.payload.clone(),
                    assigned_annotators: req.annotators.clone(),
                }
            })
            .collect();
        let batch = Batch {
            batch_id: name.clone(),
            kind: req.kind,
            annotators: req.annotators,
            seed: req.seed,
            population,
            tasks,
        };
        {
            let mut st = self.state.write().expect("state lock");
            if st.batches.contains_key(&name) {
                return Err(AnnotationError::DuplicateBatch(name));
            }
            self.append(&mut st, LogEvent::Batch(batch))?;
        }
        self.maybe_compact()?;
        Ok(name)
    }

    pub fn batch(&self, batch_id: &str) -> Result<Batch, AnnotationError> {
        self.state
            .read()
            .expect("state lock")
            .batches
            .get(batch_id)
            .cloned()
            .ok_or_else(|| AnnotationError::UnknownBatch(batch_id.to_string()))
    }

    pub fn list_batches(&self) -> Vec<BatchSummary> {
        let st = self.state.read().expect("state lock");
        st.batches
            .values()
            .map(|b| BatchSummary {
                batch_id: b.batch_id.clone(),
                kind: b.kind,
                n_tasks: b.tasks.len(),
                annotators: b.annotators.clone(),
                progress: b
                    .annotators
                    .iter()
                    .map(|a| (a.clone(), st.judged_by(b, a)))
                    .collect(),
            })
            .collect()
    }

    /// The first task in batch order that `annotator` has not judged.
    pub fn next_item(&self, batch_id: &str, annotator: &str) -> Result<NextItem, AnnotationError> {
        let st = self.state.read().expect("state lock");
        let batch = st
            .batches
            .get(batch_id)
            .ok_or_else(|| AnnotationError::UnknownBatch(batch_id.to_string()))?;
        if !batch.annotators.iter().any(|a| a == annotator) {
            return Err(AnnotationError::UnknownAnnotator {
                batch: batch_id.to_string(),
                annotator: annotator.to_string(),
            });
        }
        let total = batch.tasks.len();
        let judged = st.judged_by(batch, annotator);
        let open = batch.tasks.iter().enumerate().find(|(_, t)| {
            !st.current
                .contains_key(&(t.task_id.clone(), annotator.to_string()))
        });
        Ok(match open {
            Some((position, task)) => NextItem::Task {
                task: task.clone(),
                position,
                total,
                judged,
            },
            None => NextItem::Done { total },
        })
    }

    pub fn submit_judgment(&self, sub: JudgmentSubmission) -> Result<Ack, AnnotationError> {
        let ack = {
            let mut st = self.state.write().expect("state lock");
            let (batch_id, _) = st
                .task_index
                .get(&sub.task_id)
                .cloned()
                .ok_or_else(|| AnnotationError::UnknownTask(sub.task_id.clone()))?;
            let batch = &st.batches[&batch_id];
            if !batch.annotators.contains(&sub.annotator_id) {
                return Err(AnnotationError::UnknownAnnotator {
                    batch: batch_id,
                    annotator: sub.annotator_id,
                });
            }
            let kind = batch.kind;
            let value = sub.value.trim().to_string();
            if !kind.accepts(&value) {
                return Err(AnnotationError::InvalidLabel {
                    kind: kind.as_str(),
                    value: sub.value,
                    expected: kind.labels().join(", "),
                });
            }
            let key = (sub.task_id.clone(), sub.annotator_id.clone());
            let supersedes = st.current.get(&key).map(|&i| st.judgments[i].seq);
            let seq = st.next_seq;
            let judgment = Judgment {
                seq,
                batch_id,
                task_id: sub.task_id,
                annotator_id: sub.annotator_id,
                value,
                timestamp: now_ms(),
                supersedes,
            };
            self.append(&mut st, LogEvent::Judgment(judgment))?;
            Ack { seq, supersedes }
        };
        self.maybe_compact()?;
        Ok(ack)
    }

    /// Every judgment record held in the live log, superseded ones included.
    pub fn judgments(&self) -> Vec<Judgment> {
        self.state.read().expect("state lock").judgments.clone()
    }

    /// Current judgments of the batch in task order, then annotator order.
    pub fn export_records(&self, batch_id: &str) -> Result<Vec<ExportRecord>, AnnotationError> {
        let st = self.state.read().expect("state lock");
        let batch = st
            .batches
            .get(batch_id)
            .ok_or_else(|| AnnotationError::UnknownBatch(batch_id.to_string()))?;
        let mut out = Vec::new();
        for task in &batch.tasks {
            for a in &batch.annotators {
                if let Some(&i) = st.current.get(&(task.task_id.clone(), a.clone())) {
                    let j = &st.judgments[i];
                    out.push(ExportRecord {
                        batch_id: batch.batch_id.clone(),
                        task_id: task.task_id.clone(),
                        item_id: task.item_id.clone(),
                        kind: batch.kind,
                        annotator_id: a.clone(),
                        value: j.value.clone(),
                        timestamp: j.timestamp,
                        payload: task.payload.clone(),
                    });
                }
            }
        }
        Ok(out)
    }

    pub fn export_batch(&self, batch_id: &str, path: &Path) -> Result<usize, AnnotationError> {
        let records = self.export_records(batch_id)?;
        write_jsonl(path, &records).map_err(storage)?;
        Ok(records.len())
    }

    pub fn agreement_summary(&self, batch_id: &str) -> Result<AgreementSummary, AnnotationError> {
        let kind = self.batch(batch_id)?.kind;
        let records = self.export_records(batch_id)?;
        agreement_from_records(batch_id, kind, &records)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotation::{BatchItem, TaskKind, TaskPayload};

    fn items(n: usize, kind: TaskKind) -> Vec<BatchItem> {
        (0..n)
            .map(|i| BatchItem {
                item_id: format!("i{i:03}"),
                payload: TaskPayload {
                    context: format!("context {i}"),
                    question: (kind == TaskKind::QaAnswerYesNo).then(|| "q?".to_string()),
                    generated_literal: (kind == TaskKind::SimplificationCorrectIncorrect)
                        .then(|| format!("literal {i}")),
                },
            })
            .collect()
    }

    fn new_batch(
        name: &str,
        n: usize,
        kind: TaskKind,
        sample: Option<usize>,
        seed: u64,
    ) -> NewBatch {
        NewBatch {
            name: name.into(),
            kind,
            annotators: vec!["a".into(), "b".into()],
            items: items(n, kind),
            sample_size: sample,
            seed,
        }
    }

    fn submit(s: &AnnotationStore, task: &str, who: &str, v: &str) -> Result<Ack, AnnotationError> {
        s.submit_judgment(JudgmentSubmission {
            task_id: task.into(),
            annotator_id: who.into(),
            value: v.into(),
        })
    }

    #[test]
    fn seeded_sample_is_reproducible() {
        let ids = |seed| {
            let s = AnnotationStore::in_memory();
            s.create_batch(new_batch(
                "x",
                350,
                TaskKind::Figurativeness1To4,
                Some(50),
                seed,
            ))
            .unwrap();
            s.batch("x")
                .unwrap()
                .tasks
                .into_iter()
                .map(|t| t.item_id)
                .collect::<Vec<_>>()
        };
        let first = ids(7);
        assert_eq!(first.len(), 50);
        assert_eq!(first, ids(7));
        assert_ne!(first, ids(8));
        let mut sorted = first.clone();
        sorted.sort();
        assert_eq!(first, sorted);
    }

    #[test]
    fn sample_limits_and_duplicates() {
        let s = AnnotationStore::in_memory();
        assert_eq!(
            s.create_batch(new_batch(
                "x",
                350,
                TaskKind::Figurativeness1To4,
                Some(400),
                0
            )),
            Err(AnnotationError::SampleTooLarge {
                sample: 400,
                population: 350
            })
        );
        s.create_batch(new_batch("x", 5, TaskKind::Figurativeness1To4, None, 0))
            .unwrap();
        assert_eq!(s.batch("x").unwrap().tasks.len(), 5);
        assert_eq!(
            s.create_batch(new_batch("x", 5, TaskKind::Figurativeness1To4, None, 0)),
            Err(AnnotationError::DuplicateBatch("x".into()))
        );
    }

    #[test]
    fn next_item_walks_in_order_per_annotator() {
        let s = AnnotationStore::in_memory();
        s.create_batch(new_batch("b", 3, TaskKind::QaAnswerYesNo, None, 0))
            .unwrap();
        let first = |who| match s.next_item("b", who).unwrap() {
            NextItem::Task { task, .. } => Some(task.task_id),
            NextItem::Done { .. } => None,
        };
        assert_eq!(first("a").as_deref(), Some("b/i000"));
        submit(&s, "b/i000", "a", "yes").unwrap();
        assert_eq!(first("a").as_deref(), Some("b/i001"));
        assert_eq!(first("b").as_deref(), Some("b/i000"));
        submit(&s, "b/i001", "a", "no").unwrap();
        submit(&s, "b/i002", "a", "no").unwrap();
        assert_eq!(first("a"), None);
        assert!(matches!(
            s.next_item("b", "zed"),
            Err(AnnotationError::UnknownAnnotator { .. })
        ));
        assert!(matches!(
            s.next_item("nope", "a"),
            Err(AnnotationError::UnknownBatch(_))
        ));
    }

    #[test]
    fn labels_are_validated() {
        let s = AnnotationStore::in_memory();
        s.create_batch(new_batch("f", 2, TaskKind::Figurativeness1To4, None, 0))
            .unwrap();
        s.create_batch(new_batch("q", 2, TaskKind::QaAnswerYesNo, None, 0))
            .unwrap();
        s.create_batch(new_batch(
            "s",
            2,
            TaskKind::SimplificationCorrectIncorrect,
            None,
            0,
        ))
        .unwrap();
        assert!(submit(&s, "f/i000", "a", "3").is_ok());
        assert!(matches!(
            submit(&s, "f/i000", "a", "5"),
            Err(AnnotationError::InvalidLabel { .. })
        ));
        assert!(matches!(
            submit(&s, "q/i000", "a", "maybe"),
            Err(AnnotationError::InvalidLabel { .. })
        ));
        assert!(submit(&s, "s/i000", "a", "correct").is_ok());
        assert!(matches!(
            submit(&s, "s/i999", "a", "correct"),
            Err(AnnotationError::UnknownTask(_))
        ));
    }

    #[test]
    fn resubmission_supersedes_with_trail() {
        let s = AnnotationStore::in_memory();
        s.create_batch(new_batch("q", 1, TaskKind::QaAnswerYesNo, None, 0))
            .unwrap();
        let first = submit(&s, "q/i000", "a", "yes").unwrap();
        let second = submit(&s, "q/i000", "a", "no").unwrap();
        assert_eq!(second.supersedes, Some(first.seq));
        let all = s.judgments();
        assert_eq!(all.len(), 2);
        assert_eq!(all[0].value, "yes");
        let export = s.export_records("q").unwrap();
        assert_eq!(export.len(), 1);
        assert_eq!(export[0].value, "no");
    }

    #[test]
    fn log_replays_and_survives_torn_tail() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ann.jsonl");
        {
            let s = AnnotationStore::open(&path).unwrap();
            s.create_batch(new_batch("q", 3, TaskKind::QaAnswerYesNo, None, 0))
                .unwrap();
            submit(&s, "q/i000", "a", "yes").unwrap();
            submit(&s, "q/i000", "a", "no").unwrap();
            submit(&s, "q/i001", "b", "yes").unwrap();
        }
        let mut f = OpenOptions::new().append(true).open(&path).unwrap();
        f.write_all(b"{\"event\":\"judgment\",\"seq\":9").unwrap();
        drop(f);
        let s = AnnotationStore::open(&path).unwrap();
        let export = s.export_records("q").unwrap();
        assert_eq!(export.len(), 2);
        assert_eq!(export[0].value, "no");
        let ack = submit(&s, "q/i002", "a", "yes").unwrap();
        assert_eq!(ack.seq, 3);
        drop(s);
        let s = AnnotationStore::open(&path).unwrap();
        assert_eq!(s.export_records("q").unwrap().len(), 3);
    }

    #[test]
    fn compaction_archives_superseded() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ann.jsonl");
        let s = AnnotationStore::open(&path).unwrap();
        s.create_batch(new_batch("q", 2, TaskKind::QaAnswerYesNo, None, 0))
            .unwrap();
        submit(&s, "q/i000", "a", "yes").unwrap();
        submit(&s, "q/i000", "a", "no").unwrap();
        s.compact().unwrap();
        let live = std::fs::read_to_string(&path).unwrap();
        assert_eq!(live.lines().count(), 2);
        let archive = std::fs::read_to_string(AnnotationStore::archive_path(&path)).unwrap();
        assert_eq!(archive.lines().count(), 1);
        assert!(archive.contains("\"value\":\"yes\""));
        let again = submit(&s, "q/i000", "a", "yes").unwrap();
        assert_eq!(again.supersedes, Some(1));
        drop(s);
        let s = AnnotationStore::open(&path).unwrap();
        assert_eq!(s.export_records("q").unwrap()[0].value, "yes");
    }

    #[test]
    fn agreement_needs_overlap() {
        let s = AnnotationStore::in_memory();
        s.create_batch(new_batch("q", 2, TaskKind::QaAnswerYesNo, None, 0))
            .unwrap();
        submit(&s, "q/i000", "a", "yes").unwrap();
        submit(&s, "q/i001", "b", "yes").unwrap();
        assert_eq!(s.agreement_summary("q"), Err(AnnotationError::NoOverlap));
        submit(&s, "q/i000", "b", "yes").unwrap();
        let sum = s.agreement_summary("q").unwrap();
        assert_eq!(sum.pairs[0].n_overlap, 1);
        assert_eq!(sum.pairs[0].kappa.kappa, 1.0);
    }

    #[test]
    fn empty_export() {
        let dir = tempfile::tempdir().unwrap();
        let s = AnnotationStore::in_memory();
        s.create_batch(new_batch("q", 2, TaskKind::QaAnswerYesNo, None, 0))
            .unwrap();
        let path = dir.path().join("e.jsonl");
        assert_eq!(s.export_batch("q", &path).unwrap(), 0);
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "");
    }
}
