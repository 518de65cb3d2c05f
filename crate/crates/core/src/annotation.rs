//! Expert annotation rounds: task sets of candidate pairs, a durable judgment
//! store, agreement statistics and ground-truth export.
//!
//! Judgments are kept in an append-only JSON-lines log that is replayed on
//! startup. Writes go through one mutex and are synced to disk before they
//! are acknowledged; readers take a cheap clone of an immutable snapshot.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::{Arc, Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, Recipe};
use crate::eval_ml::{self, ExpertVerdict, GroundTruthRow};
use crate::fusion::{top_candidates, FusionError, ScoreTable, Selection};

#[derive(Debug, Error)]
pub enum AnnotationError {
    #[error("requested {requested} main recipes but the table covers only {available}")]
    TooManyMains { requested: usize, available: usize },
    #[error("pair ({0}, {1}) is not in the task set")]
    PairNotInTaskSet(String, String),
    #[error("verdict must be \"similar\" or \"not_similar\", got {0:?}")]
    InvalidVerdict(String),
    #[error("expert id must be non-empty")]
    MissingExpert,
    #[error("expert {0:?} is not on the roster")]
    UnknownExpert(String),
    #[error("agreement needs at least 2 experts, have {0}")]
    InsufficientExperts(usize),
    #[error("unknown recipe {0:?}")]
    UnknownRecipe(String),
    #[error("judgment log line {line}: {reason}")]
    CorruptLog { line: usize, reason: String },
    #[error("task set: {0}")]
    TaskSet(String),
    #[error(transparent)]
    Fusion(#[from] FusionError),
    #[error(transparent)]
    Ml(#[from] eval_ml::MlError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Recipe pair with ids in lexicographic order.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PairKey {
    pub main_id: String,
    pub secondary_id: String,
}

impl PairKey {
    pub fn new(a: impl Into<String>, b: impl Into<String>) -> Self {
        let (a, b) = (a.into(), b.into());
        if a <= b {
            Self { main_id: a, secondary_id: b }
        } else {
            Self { main_id: b, secondary_id: a }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Similar,
    NotSimilar,
}

impl Verdict {
    pub fn is_similar(self) -> bool {
        self == Verdict::Similar
    }
}

impl FromStr for Verdict {
    type Err = AnnotationError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "similar" => Ok(Verdict::Similar),
            "not_similar" => Ok(Verdict::NotSimilar),
            other => Err(AnnotationError::InvalidVerdict(other.to_string())),
        }
    }
}

// ---------------------------------------------------------------------------
// Task sets
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskPair {
    pub main_id: String,
    pub secondary_id: String,
    pub fused: f64,
}

impl TaskPair {
    pub fn key(&self) -> PairKey {
        PairKey::new(self.main_id.clone(), self.secondary_id.clone())
    }
}

/// Pairs presented to every expert, in presentation order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSet {
    pub mains: Vec<String>,
    pub pairs: Vec<TaskPair>,
}

impl TaskSet {
    pub fn read(path: &Path) -> Result<Self, AnnotationError> {
        let text = std::fs::read_to_string(path)?;
        let set: TaskSet = serde_json::from_str(&text).map_err(|e| AnnotationError::TaskSet(e.to_string()))?;
        let mut seen = BTreeSet::new();
        for p in &set.pairs {
            if p.main_id > p.secondary_id {
                return Err(AnnotationError::TaskSet(format!("pair ({}, {}) is not canonical", p.main_id, p.secondary_id)));
            }
            if !seen.insert(p.key()) {
                return Err(AnnotationError::TaskSet(format!("duplicate pair ({}, {})", p.main_id, p.secondary_id)));
            }
        }
        Ok(set)
    }

    pub fn write(&self, path: &Path) -> Result<(), AnnotationError> {
        let text = serde_json::to_string_pretty(self).map_err(|e| AnnotationError::TaskSet(e.to_string()))?;
        std::fs::write(path, text + "\n")?;
        Ok(())
    }
}

/// Samples `n_mains` recipes with a seeded RNG and gathers each one's top
/// candidates. Pairs reached from both ends appear once.
pub fn create_task_set(table: &ScoreTable, n_mains: usize, selection: Selection, seed: u64) -> Result<TaskSet, AnnotationError> {
    let ids = table.ids();
    if n_mains > ids.len() {
        return Err(AnnotationError::TooManyMains { requested: n_mains, available: ids.len() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked: Vec<usize> = rand::seq::index::sample(&mut rng, ids.len(), n_mains).into_vec();
    picked.sort_unstable();
    let mains: Vec<String> = picked.into_iter().map(|i| ids[i].clone()).collect();
    let mut seen = BTreeSet::new();
    let mut pairs = Vec::new();
    for main in &mains {
        for c in top_candidates(table, main, selection)? {
            let key = PairKey::new(main.clone(), c.secondary_id);
            if seen.insert(key.clone()) {
                pairs.push(TaskPair { main_id: key.main_id, secondary_id: key.secondary_id, fused: c.fused });
            }
        }
    }
    Ok(TaskSet { mains, pairs })
}

// ---------------------------------------------------------------------------
// Judgment store
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Judgment {
    pub expert: String,
    pub main_id: String,
    pub secondary_id: String,
    pub verdict: Verdict,
    /// Milliseconds since the Unix epoch.
    pub timestamp: u64,
}

impl Judgment {
    pub fn key(&self) -> PairKey {
        PairKey::new(self.main_id.clone(), self.secondary_id.clone())
    }
}

/// A verdict that replaced an earlier, different one.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AuditEntry {
    pub expert: String,
    pub pair: PairKey,
    pub previous: Verdict,
    pub current: Verdict,
    pub timestamp: u64,
}

/// Immutable view of the store at one point in time.
#[derive(Debug, Clone, Default)]
pub struct Snapshot {
    judgments: BTreeMap<(String, PairKey), Judgment>,
    audit: Vec<AuditEntry>,
}

impl Snapshot {
    pub fn judgments(&self) -> impl Iterator<Item = &Judgment> {
        self.judgments.values()
    }

    pub fn len(&self) -> usize {
        self.judgments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.judgments.is_empty()
    }

    pub fn get(&self, expert: &str, pair: &PairKey) -> Option<&Judgment> {
        self.judgments.get(&(expert.to_string(), pair.clone()))
    }

    pub fn audit(&self) -> &[AuditEntry] {
        &self.audit
    }

    pub fn experts(&self) -> BTreeSet<&str> {
        self.judgments.keys().map(|(e, _)| e.as_str()).collect()
    }

    pub fn judged_count(&self, expert: &str) -> usize {
        self.judgments.keys().filter(|(e, _)| e == expert).count()
    }

    pub fn verdicts(&self) -> Vec<ExpertVerdict> {
        self.judgments
            .values()
            .map(|j| ExpertVerdict {
                expert: j.expert.clone(),
                main_id: j.main_id.clone(),
                secondary_id: j.secondary_id.clone(),
                similar: j.verdict.is_similar(),
            })
            .collect()
    }

    /// Returns whether the judgment changed the store.
    fn apply(&mut self, j: Judgment) -> bool {
        let key = (j.expert.clone(), j.key());
        match self.judgments.get(&key) {
            Some(old) if old.verdict == j.verdict => false,
            Some(old) => {
                self.audit.push(AuditEntry {
                    expert: j.expert.clone(),
                    pair: key.1.clone(),
                    previous: old.verdict,
                    current: j.verdict,
                    timestamp: j.timestamp,
                });
                self.judgments.insert(key, j);
                true
            }
            None => {
                self.judgments.insert(key, j);
                true
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Ack {
    /// False for an identical resubmission.
    pub recorded: bool,
    pub judged_count: usize,
}

/// Durable judgment log. Without a path the store lives in memory only.
#[derive(Debug)]
pub struct JudgmentStore {
    path: Option<PathBuf>,
    writer: Mutex<Option<File>>,
    snapshot: RwLock<Arc<Snapshot>>,
}

impl JudgmentStore {
    pub fn in_memory() -> Self {
        Self { path: None, writer: Mutex::new(None), snapshot: RwLock::new(Arc::new(Snapshot::default())) }
    }

    /// Opens or creates the log at `path` and replays it. A torn final line
    /// left by a crash is cut off.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, AnnotationError> {
        let path = path.as_ref().to_path_buf();
        let mut file = OpenOptions::new().read(true).append(true).create(true).open(&path)?;
        let mut text = String::new();
        file.read_to_string(&mut text)?;
        if !text.is_empty() && !text.ends_with('\n') {
            let keep = text.rfind('\n').map_or(0, |i| i + 1);
            log::warn!("{}: dropping incomplete trailing record", path.display());
            file.set_len(keep as u64)?;
            file.seek(SeekFrom::End(0))?;
            text.truncate(keep);
        }
        let mut snapshot = Snapshot::default();
        for (i, line) in BufReader::new(text.as_bytes()).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let j: Judgment =
                serde_json::from_str(&line).map_err(|e| AnnotationError::CorruptLog { line: i + 1, reason: e.to_string() })?;
            snapshot.apply(j);
        }
        Ok(Self { path: Some(path), writer: Mutex::new(Some(file)), snapshot: RwLock::new(Arc::new(snapshot)) })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn snapshot(&self) -> Arc<Snapshot> {
        self.snapshot.read().expect("snapshot lock").clone()
    }

    /// Records a judgment, returning only after it is on disk.
    pub fn submit(&self, judgment: Judgment) -> Result<Ack, AnnotationError> {
        if judgment.expert.trim().is_empty() {
            return Err(AnnotationError::MissingExpert);
        }
        let key = judgment.key();
        let judgment = Judgment { main_id: key.main_id, secondary_id: key.secondary_id, ..judgment };
        let mut writer = self.writer.lock().expect("writer lock");
        let current = self.snapshot();
        if current.get(&judgment.expert, &judgment.key()).is_some_and(|j| j.verdict == judgment.verdict) {
            return Ok(Ack { recorded: false, judged_count: current.judged_count(&judgment.expert) });
        }
        if let Some(file) = writer.as_mut() {
            let mut line = serde_json::to_string(&judgment).expect("judgment serializes");
            line.push('\n');
            file.write_all(line.as_bytes())?;
            file.flush()?;
            file.sync_data()?;
        }
        let mut next = (*current).clone();
        let expert = judgment.expert.clone();
        next.apply(judgment);
        let judged_count = next.judged_count(&expert);
        *self.snapshot.write().expect("snapshot lock") = Arc::new(next);
        Ok(Ack { recorded: true, judged_count })
    }
}

pub fn now_millis() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis() as u64)
}

// ---------------------------------------------------------------------------
// Agreement and export
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AgreementStats {
    pub experts: Vec<String>,
    pub total_pairs_judged_by_all: usize,
    pub agreed_count: usize,
    pub agreement_pct: f64,
}

/// Agreement over pairs judged by every expert seen in the store.
pub fn agreement_stats(snapshot: &Snapshot) -> Result<AgreementStats, AnnotationError> {
    let experts: Vec<String> = snapshot.experts().into_iter().map(str::to_string).collect();
    if experts.len() < 2 {
        return Err(AnnotationError::InsufficientExperts(experts.len()));
    }
    let mut by_pair: BTreeMap<&PairKey, Vec<Verdict>> = BTreeMap::new();
    for ((_, pair), j) in &snapshot.judgments {
        by_pair.entry(pair).or_default().push(j.verdict);
    }
    let complete: Vec<&Vec<Verdict>> = by_pair.values().filter(|v| v.len() == experts.len()).collect();
    let total = complete.len();
    let agreed = complete.iter().filter(|v| v.iter().all(|&x| x == v[0])).count();
    let agreement_pct = if total == 0 { 0.0 } else { 100.0 * agreed as f64 / total as f64 };
    Ok(AgreementStats { experts, total_pairs_judged_by_all: total, agreed_count: agreed, agreement_pct })
}

/// Unanimously judged pairs with their labels, canonical and sorted.
pub fn agreed_pairs(snapshot: &Snapshot) -> Vec<GroundTruthRow> {
    eval_ml::unanimous_labels(&snapshot.verdicts())
}

/// Ground-truth file contents (`main_id,secondary_id,label`).
pub fn export_ground_truth(snapshot: &Snapshot) -> Result<Vec<u8>, AnnotationError> {
    let mut buf = Vec::new();
    eval_ml::write_ground_truth(&agreed_pairs(snapshot), &mut buf)?;
    Ok(buf)
}

// ---------------------------------------------------------------------------
// Service
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Default)]
pub struct ServiceOptions {
    /// Include fused scores in task presentations.
    pub reveal_scores: bool,
    /// When set, only these experts may fetch tasks or submit.
    pub roster: Option<BTreeSet<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecipeView {
    pub id: String,
    pub title: String,
    pub ingredients: Vec<String>,
    pub instructions: Vec<String>,
}

impl From<&Recipe> for RecipeView {
    fn from(r: &Recipe) -> Self {
        Self {
            id: r.id.clone(),
            title: r.title.clone(),
            ingredients: r.ingredients.iter().map(|i| i.descriptor()).collect(),
            instructions: r.instructions.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
#[allow(clippy::large_enum_variant)]
pub enum NextTask {
    Pair {
        /// Zero-based position in the task set.
        index: usize,
        total: usize,
        judged: usize,
        main: RecipeView,
        secondary: RecipeView,
        #[serde(skip_serializing_if = "Option::is_none")]
        fused: Option<f64>,
    },
    Done { judged: usize, total: usize },
}

pub struct AnnotationService {
    corpus: Corpus,
    tasks: TaskSet,
    task_index: HashMap<PairKey, usize>,
    store: JudgmentStore,
    options: ServiceOptions,
}

impl AnnotationService {
    pub fn new(corpus: Corpus, tasks: TaskSet, store: JudgmentStore, options: ServiceOptions) -> Result<Self, AnnotationError> {
        for p in &tasks.pairs {
            for id in [&p.main_id, &p.secondary_id] {
                if corpus.get(id).is_none() {
                    return Err(AnnotationError::UnknownRecipe(id.clone()));
                }
            }
        }
        let task_index = tasks.pairs.iter().enumerate().map(|(i, p)| (p.key(), i)).collect();
        Ok(Self { corpus, tasks, task_index, store, options })
    }

    pub fn tasks(&self) -> &TaskSet {
        &self.tasks
    }

    pub fn store(&self) -> &JudgmentStore {
        &self.store
    }

    fn check_expert(&self, expert: &str) -> Result<(), AnnotationError> {
        if expert.trim().is_empty() {
            return Err(AnnotationError::MissingExpert);
        }
        match &self.options.roster {
            Some(roster) if !roster.contains(expert) => Err(AnnotationError::UnknownExpert(expert.to_string())),
            _ => Ok(()),
        }
    }

    pub fn recipe(&self, id: &str) -> Result<RecipeView, AnnotationError> {
        self.corpus.get(id).map(RecipeView::from).ok_or_else(|| AnnotationError::UnknownRecipe(id.to_string()))
    }

    /// First task-set pair the expert has not judged.
    pub fn next_task(&self, expert: &str) -> Result<NextTask, AnnotationError> {
        self.check_expert(expert)?;
        let snap = self.store.snapshot();
        let total = self.tasks.pairs.len();
        let judged = self.tasks.pairs.iter().filter(|p| snap.get(expert, &p.key()).is_some()).count();
        let Some((index, pair)) = self.tasks.pairs.iter().enumerate().find(|(_, p)| snap.get(expert, &p.key()).is_none()) else {
            return Ok(NextTask::Done { judged, total });
        };
        Ok(NextTask::Pair {
            index,
            total,
            judged,
            main: self.recipe(&pair.main_id)?,
            secondary: self.recipe(&pair.secondary_id)?,
            fused: self.options.reveal_scores.then_some(pair.fused),
        })
    }

    pub fn submit(&self, expert: &str, main_id: &str, secondary_id: &str, verdict: Verdict) -> Result<Ack, AnnotationError> {
        self.check_expert(expert)?;
        let key = PairKey::new(main_id, secondary_id);
        if !self.task_index.contains_key(&key) {
            return Err(AnnotationError::PairNotInTaskSet(key.main_id, key.secondary_id));
        }
        self.store.submit(Judgment {
            expert: expert.to_string(),
            main_id: key.main_id,
            secondary_id: key.secondary_id,
            verdict,
            timestamp: now_millis(),
        })
    }

    pub fn agreement(&self) -> Result<AgreementStats, AnnotationError> {
        agreement_stats(&self.store.snapshot())
    }

    pub fn export(&self) -> Result<Vec<u8>, AnnotationError> {
        export_ground_truth(&self.store.snapshot())
    }
}
