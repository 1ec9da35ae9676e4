//! Listening-test backend: task pool, rating validation, an append-only
//! event log and aggregated results.
//!
//! State is event-sourced. Opening a service replays its log, so results
//! computed after a restart match those computed live.

use std::collections::{BTreeMap, HashMap};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Gender;
use crate::metrics::{aggregate_mos, preference_ranking, LeaderboardEntry, MetricError, MosSummary};

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path} line {line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
    #[error("invalid task '{id}': {message}")]
    InvalidTask { id: String, message: String },
    #[error("unknown task '{0}'")]
    UnknownTask(String),
    #[error("unknown rater '{0}'")]
    UnknownRater(String),
    #[error("no eligible task for this rater")]
    NoEligibleTask,
    #[error("invalid rating: {0}")]
    InvalidRating(String),
    #[error("rater country '{rater}' does not match utterance country '{utterance}'")]
    CountryMismatch { rater: String, utterance: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ServiceError + '_ {
    move |source| ServiceError::Io {
        path: path.display().to_string(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Mos,
    AccentMatch,
    Preference,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dimension {
    Overall,
    Naturalness,
    Accentedness,
    AccentMatch,
    CountryMatch,
    GenderMatch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtteranceRef {
    pub utterance_id: String,
    pub model: String,
    pub text: String,
    pub audio_path: String,
    #[serde(default)]
    pub accent: String,
    #[serde(default)]
    pub country: String,
    #[serde(default)]
    pub gender: Gender,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatingTask {
    pub task_id: String,
    pub kind: TaskKind,
    pub utterances: Vec<UtteranceRef>,
    pub dimensions: Vec<Dimension>,
}

impl RatingTask {
    pub fn validate(&self) -> Result<(), ServiceError> {
        let bad = |message: &str| ServiceError::InvalidTask {
            id: self.task_id.clone(),
            message: message.to_string(),
        };
        if self.dimensions.is_empty() {
            return Err(bad("dimensions must be non-empty"));
        }
        match self.kind {
            TaskKind::Preference => {
                let [a, b] = self.utterances.as_slice() else {
                    return Err(bad("preference tasks reference exactly 2 utterances"));
                };
                if a.model == b.model {
                    return Err(bad("preference utterances must come from distinct models"));
                }
                if a.text != b.text {
                    return Err(bad("preference utterances must share the same text"));
                }
            }
            TaskKind::Mos | TaskKind::AccentMatch => {
                if self.utterances.len() != 1 {
                    return Err(bad("mos and accent_match tasks reference exactly 1 utterance"));
                }
            }
        }
        Ok(())
    }
}

/// What a rater sees: model identities are never included.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskView {
    pub task_id: String,
    pub kind: TaskKind,
    pub dimensions: Vec<Dimension>,
    pub utterances: Vec<UtteranceView>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference: Option<ReferenceMeta>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtteranceView {
    pub audio_url: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceMeta {
    pub accent: String,
    pub country: String,
    pub gender: Gender,
}

impl TaskView {
    pub fn of(task: &RatingTask) -> Self {
        let reference = (task.kind == TaskKind::AccentMatch).then(|| {
            let u = &task.utterances[0];
            ReferenceMeta {
                accent: u.accent.clone(),
                country: u.country.clone(),
                gender: u.gender,
            }
        });
        TaskView {
            task_id: task.task_id.clone(),
            kind: task.kind,
            dimensions: task.dimensions.clone(),
            utterances: task
                .utterances
                .iter()
                .map(|u| UtteranceView {
                    audio_url: format!("/api/audio/{}", u.utterance_id),
                    text: u.text.clone(),
                })
                .collect(),
            reference,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RaterMeta {
    pub country: String,
    #[serde(default)]
    pub accent: String,
    #[serde(default)]
    pub gender: Gender,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Left,
    Right,
}

/// Persisted, validated rating. One line of the event log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatingEvent {
    pub seq: u64,
    pub task_id: String,
    pub rater_id: String,
    pub rater_meta: RaterMeta,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub values: BTreeMap<Dimension, u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chosen_side: Option<Side>,
    pub timestamp_ms: u64,
}

/// Raw submission as received. Values stay untyped until validated so that
/// `4.5` can be rejected rather than coerced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatingSubmission {
    pub task_id: String,
    pub rater_id: String,
    #[serde(default)]
    pub rater_meta: Option<RaterMeta>,
    #[serde(default)]
    pub values: BTreeMap<String, serde_json::Value>,
    #[serde(default)]
    pub chosen_side: Option<Side>,
    #[serde(default)]
    pub timestamp_ms: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ack {
    pub task_id: String,
    pub rater_id: String,
    pub seq: u64,
    pub replaced: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct AuditEntry {
    task_id: String,
    rater_id: String,
    replaced_seq: u64,
    by_seq: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct RaterEntry {
    token: String,
    #[serde(flatten)]
    meta: RaterMeta,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupKey {
    Model,
    Country,
    Accent,
    Gender,
}

impl GroupKey {
    pub fn parse_list(s: &str) -> Result<Vec<GroupKey>, String> {
        s.split(',')
            .map(str::trim)
            .filter(|p| !p.is_empty())
            .map(|p| match p {
                "model" => Ok(GroupKey::Model),
                "country" => Ok(GroupKey::Country),
                "accent" => Ok(GroupKey::Accent),
                "gender" => Ok(GroupKey::Gender),
                other => Err(format!("unknown group key '{other}'")),
            })
            .collect()
    }

    fn value(self, u: &UtteranceRef) -> String {
        match self {
            GroupKey::Model => u.model.clone(),
            GroupKey::Country => u.country.clone(),
            GroupKey::Accent => u.accent.clone(),
            GroupKey::Gender => u.gender.as_str().to_string(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            GroupKey::Model => "model",
            GroupKey::Country => "country",
            GroupKey::Accent => "accent",
            GroupKey::Gender => "gender",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MosRow {
    pub group: BTreeMap<String, String>,
    pub dimension: Dimension,
    #[serde(flatten)]
    pub summary: MosSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferenceGroup {
    pub group: BTreeMap<String, String>,
    pub leaderboard: Vec<LeaderboardEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsReport {
    pub group_by: Vec<GroupKey>,
    pub mos: Vec<MosRow>,
    pub preference: Vec<PreferenceGroup>,
}

/// Paths used by a service instance. Audit and rater files default to
/// siblings of the event log.
#[derive(Debug, Clone)]
pub struct ServicePaths {
    pub log: PathBuf,
    pub audit: PathBuf,
    pub raters: PathBuf,
}

impl ServicePaths {
    pub fn beside_log(log: impl Into<PathBuf>) -> Self {
        let log = log.into();
        let sibling = |suffix: &str| {
            let mut name = log.file_stem().unwrap_or_default().to_os_string();
            name.push(suffix);
            log.with_file_name(name)
        };
        ServicePaths {
            audit: sibling(".audit.jsonl"),
            raters: sibling(".raters.jsonl"),
            log,
        }
    }
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, ServiceError> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let reader = BufReader::new(File::open(path).map_err(io_err(path))?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| ServiceError::Parse {
            path: path.display().to_string(),
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

pub fn load_tasks(path: &Path) -> Result<Vec<RatingTask>, ServiceError> {
    read_jsonl(path)
}

struct AppendLog {
    path: PathBuf,
    file: File,
}

impl AppendLog {
    fn open(path: &Path) -> Result<Self, ServiceError> {
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(io_err(path))?;
        Ok(AppendLog {
            path: path.to_path_buf(),
            file,
        })
    }

    /// Writes one line and syncs it to disk.
    fn append<T: Serialize>(&mut self, entry: &T) -> Result<(), ServiceError> {
        let mut line = serde_json::to_vec(entry).expect("log entries serialize");
        line.push(b'\n');
        self.file.write_all(&line).map_err(io_err(&self.path))?;
        self.file.sync_data().map_err(io_err(&self.path))
    }
}

pub struct EvalService {
    tasks: Vec<RatingTask>,
    task_index: HashMap<String, usize>,
    /// Latest event per (task, rater), in first-submission order.
    events: Vec<RatingEvent>,
    event_index: HashMap<(String, String), usize>,
    ratings_per_task: Vec<usize>,
    raters: HashMap<String, RaterMeta>,
    next_seq: u64,
    log: AppendLog,
    audit: AppendLog,
    rater_log: AppendLog,
    audio_root: PathBuf,
}

impl EvalService {
    /// Validates the task pool and replays any existing log.
    pub fn open(
        tasks: Vec<RatingTask>,
        paths: &ServicePaths,
        audio_root: impl Into<PathBuf>,
    ) -> Result<Self, ServiceError> {
        let mut task_index = HashMap::new();
        for (i, t) in tasks.iter().enumerate() {
            t.validate()?;
            if task_index.insert(t.task_id.clone(), i).is_some() {
                return Err(ServiceError::InvalidTask {
                    id: t.task_id.clone(),
                    message: "duplicate task_id".into(),
                });
            }
        }
        let raters = read_jsonl::<RaterEntry>(&paths.raters)?
            .into_iter()
            .map(|r| (r.token, r.meta))
            .collect();
        let mut svc = EvalService {
            ratings_per_task: vec![0; tasks.len()],
            tasks,
            task_index,
            events: Vec::new(),
            event_index: HashMap::new(),
            raters,
            next_seq: 0,
            log: AppendLog::open(&paths.log)?,
            audit: AppendLog::open(&paths.audit)?,
            rater_log: AppendLog::open(&paths.raters)?,
            audio_root: audio_root.into(),
        };
        for e in read_jsonl::<RatingEvent>(&paths.log)? {
            if !svc.task_index.contains_key(&e.task_id) {
                return Err(ServiceError::UnknownTask(e.task_id));
            }
            svc.next_seq = svc.next_seq.max(e.seq + 1);
            svc.apply(e);
        }
        Ok(svc)
    }

    pub fn tasks(&self) -> &[RatingTask] {
        &self.tasks
    }

    pub fn event_count(&self) -> usize {
        self.events.len()
    }

    /// Issues an anonymous token for a rater.
    pub fn register_rater(&mut self, meta: RaterMeta) -> Result<String, ServiceError> {
        let mut bytes = [0u8; 16];
        rand::rng().fill_bytes(&mut bytes);
        let token = hex::encode(bytes);
        self.register_rater_with_token(token.clone(), meta)?;
        Ok(token)
    }

    pub fn register_rater_with_token(&mut self, token: String, meta: RaterMeta) -> Result<(), ServiceError> {
        self.rater_log.append(&RaterEntry {
            token: token.clone(),
            meta: meta.clone(),
        })?;
        self.raters.insert(token, meta);
        Ok(())
    }

    pub fn rater(&self, token: &str) -> Option<&RaterMeta> {
        self.raters.get(token)
    }

    fn eligible(&self, task: &RatingTask, meta: &RaterMeta) -> bool {
        task.kind != TaskKind::AccentMatch || task.utterances[0].country == meta.country
    }

    /// Least-rated eligible task the rater has not yet completed; ties go to
    /// the task listed first.
    pub fn next_task(&self, rater_id: &str) -> Result<&RatingTask, ServiceError> {
        let meta = self
            .raters
            .get(rater_id)
            .ok_or_else(|| ServiceError::UnknownRater(rater_id.to_string()))?;
        self.tasks
            .iter()
            .enumerate()
            .filter(|(_, t)| self.eligible(t, meta))
            .filter(|(_, t)| {
                !self
                    .event_index
                    .contains_key(&(t.task_id.clone(), rater_id.to_string()))
            })
            .min_by_key(|(i, _)| (self.ratings_per_task[*i], *i))
            .map(|(_, t)| t)
            .ok_or(ServiceError::NoEligibleTask)
    }

    fn validate(&self, s: &RatingSubmission) -> Result<RatingEvent, ServiceError> {
        let task = self
            .task_index
            .get(&s.task_id)
            .map(|&i| &self.tasks[i])
            .ok_or_else(|| ServiceError::UnknownTask(s.task_id.clone()))?;
        let meta = match (&s.rater_meta, self.raters.get(&s.rater_id)) {
            (_, Some(m)) => m.clone(),
            (Some(m), None) => m.clone(),
            (None, None) => return Err(ServiceError::UnknownRater(s.rater_id.clone())),
        };
        if !self.eligible(task, &meta) {
            return Err(ServiceError::CountryMismatch {
                rater: meta.country,
                utterance: task.utterances[0].country.clone(),
            });
        }
        let invalid = |m: String| ServiceError::InvalidRating(m);
        let mut values = BTreeMap::new();
        match task.kind {
            TaskKind::Preference => {
                if s.chosen_side.is_none() {
                    return Err(invalid("preference submission without chosen_side".into()));
                }
                if !s.values.is_empty() {
                    return Err(invalid("preference submissions carry no Likert values".into()));
                }
            }
            TaskKind::Mos | TaskKind::AccentMatch => {
                if s.chosen_side.is_some() {
                    return Err(invalid("chosen_side is only valid for preference tasks".into()));
                }
                for (key, raw) in &s.values {
                    let dim: Dimension = serde_json::from_value(serde_json::Value::String(key.clone()))
                        .map_err(|_| invalid(format!("unknown dimension '{key}'")))?;
                    if !task.dimensions.contains(&dim) {
                        return Err(invalid(format!("dimension '{key}' is not rated in this task")));
                    }
                    let v = raw
                        .as_i64()
                        .ok_or_else(|| invalid(format!("{key}: {raw} is not an integer")))?;
                    if !(1..=5).contains(&v) {
                        return Err(invalid(format!("{key}: {v} outside 1-5")));
                    }
                    values.insert(dim, v as u8);
                }
                if let Some(missing) = task.dimensions.iter().find(|d| !values.contains_key(d)) {
                    return Err(invalid(format!("missing value for {missing:?}")));
                }
            }
        }
        Ok(RatingEvent {
            seq: self.next_seq,
            task_id: s.task_id.clone(),
            rater_id: s.rater_id.clone(),
            rater_meta: meta,
            values,
            chosen_side: s.chosen_side,
            timestamp_ms: s.timestamp_ms.unwrap_or_else(now_ms),
        })
    }

    /// Validates, durably appends and applies a rating. A repeat
    /// submission for the same (task, rater) replaces the earlier one and
    /// is recorded in the audit log.
    pub fn submit(&mut self, s: &RatingSubmission) -> Result<Ack, ServiceError> {
        let event = self.validate(s)?;
        self.log.append(&event)?;
        self.next_seq += 1;
        let ack = Ack {
            task_id: event.task_id.clone(),
            rater_id: event.rater_id.clone(),
            seq: event.seq,
            replaced: false,
        };
        match self.apply(event) {
            Some(replaced_seq) => {
                self.audit.append(&AuditEntry {
                    task_id: ack.task_id.clone(),
                    rater_id: ack.rater_id.clone(),
                    replaced_seq,
                    by_seq: ack.seq,
                })?;
                Ok(Ack { replaced: true, ..ack })
            }
            None => Ok(ack),
        }
    }

    /// Returns the sequence number of a replaced event, if any.
    fn apply(&mut self, e: RatingEvent) -> Option<u64> {
        let key = (e.task_id.clone(), e.rater_id.clone());
        match self.event_index.get(&key) {
            Some(&i) => Some(std::mem::replace(&mut self.events[i], e).seq),
            None => {
                self.ratings_per_task[self.task_index[&e.task_id]] += 1;
                self.event_index.insert(key, self.events.len());
                self.events.push(e);
                None
            }
        }
    }

    /// Audio file for an utterance referenced by any task.
    pub fn audio_path(&self, utterance_id: &str) -> Option<PathBuf> {
        self.tasks
            .iter()
            .flat_map(|t| &t.utterances)
            .find(|u| u.utterance_id == utterance_id)
            .map(|u| self.audio_root.join(&u.audio_path))
    }

    /// MOS per (group, dimension) and preference leaderboards per group.
    /// Preference groups use every key except `model`, taken from the
    /// chosen utterance.
    pub fn results(&self, group_by: &[GroupKey]) -> ResultsReport {
        let group_of = |u: &UtteranceRef, keys: &[GroupKey]| -> BTreeMap<String, String> {
            keys.iter().map(|k| (k.name().to_string(), k.value(u))).collect()
        };
        let pref_keys: Vec<GroupKey> = group_by.iter().copied().filter(|k| *k != GroupKey::Model).collect();

        let mut ratings: BTreeMap<(BTreeMap<String, String>, Dimension), Vec<i64>> = BTreeMap::new();
        let mut votes: BTreeMap<BTreeMap<String, String>, BTreeMap<String, u64>> = BTreeMap::new();
        let mut ordered: Vec<&RatingEvent> = self.events.iter().collect();
        ordered.sort_by_key(|e| e.seq);
        for e in ordered {
            let task = &self.tasks[self.task_index[&e.task_id]];
            match (task.kind, e.chosen_side) {
                (TaskKind::Preference, Some(side)) => {
                    let (win, lose) = match side {
                        Side::Left => (&task.utterances[0], &task.utterances[1]),
                        Side::Right => (&task.utterances[1], &task.utterances[0]),
                    };
                    let tally = votes.entry(group_of(win, &pref_keys)).or_default();
                    *tally.entry(win.model.clone()).or_default() += 1;
                    tally.entry(lose.model.clone()).or_default();
                }
                _ => {
                    let g = group_of(&task.utterances[0], group_by);
                    for (&dim, &v) in &e.values {
                        ratings.entry((g.clone(), dim)).or_default().push(v as i64);
                    }
                }
            }
        }
        ResultsReport {
            group_by: group_by.to_vec(),
            mos: ratings
                .into_iter()
                .filter_map(|((group, dimension), vs)| {
                    aggregate_mos(&vs).ok().map(|summary| MosRow {
                        group,
                        dimension,
                        summary,
                    })
                })
                .collect(),
            preference: votes
                .into_iter()
                .map(|(group, tally)| PreferenceGroup {
                    group,
                    leaderboard: preference_ranking(&tally),
                })
                .collect(),
        }
    }

    /// Canonical JSON encoding of [`Self::results`].
    pub fn results_json(&self, group_by: &[GroupKey]) -> String {
        serde_json::to_string_pretty(&self.results(group_by)).expect("report serializes")
    }
}

/// One rating in flat form, for offline MOS tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatingRow {
    pub model: String,
    #[serde(default)]
    pub country: String,
    #[serde(default)]
    pub accent: String,
    #[serde(default)]
    pub gender: Gender,
    #[serde(default = "overall")]
    pub dimension: Dimension,
    pub value: i64,
}

fn overall() -> Dimension {
    Dimension::Overall
}

/// MOS per (group, dimension), in group order.
pub fn mos_table(rows: &[RatingRow], group_by: &[GroupKey]) -> Result<Vec<MosRow>, MetricError> {
    let mut ratings: BTreeMap<(BTreeMap<String, String>, Dimension), Vec<i64>> = BTreeMap::new();
    for r in rows {
        let group = group_by
            .iter()
            .map(|k| {
                let v = match k {
                    GroupKey::Model => r.model.clone(),
                    GroupKey::Country => r.country.clone(),
                    GroupKey::Accent => r.accent.clone(),
                    GroupKey::Gender => r.gender.as_str().to_string(),
                };
                (k.name().to_string(), v)
            })
            .collect();
        ratings.entry((group, r.dimension)).or_default().push(r.value);
    }
    ratings
        .into_iter()
        .map(|((group, dimension), vs)| {
            Ok(MosRow {
                group,
                dimension,
                summary: aggregate_mos(&vs)?,
            })
        })
        .collect()
}

fn now_ms() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map_or(0, |d| d.as_millis() as u64)
}
