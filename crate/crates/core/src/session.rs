//! Durable labeling sessions.
//!
//! A session is its create request plus an append-only list of events. The
//! engine is deterministic, so replaying the events over a freshly prepared
//! session rebuilds the exact state. On disk every session owns a directory:
//!
//! ```text
//! {root}/{id}/session.json    create request
//! {root}/{id}/events.jsonl    one event per line, synced before acknowledgment
//! {root}/{id}/snapshot.json   progress after the last multiple of SNAPSHOT_EVERY events
//! ```

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use rand::distr::{Alphanumeric, SampleString};
use serde::{Deserialize, Serialize};

use crate::active::{label_name, Phase, PolicyConfig, SessionState, StopReason};
use crate::error::{Error, Result};
use crate::evaluation::{ConfusionCounts, FarMode, Metrics};
use crate::pipeline::{
    prepare_active, score_cell, Dataset, FilterKind, PreparedSession, Treatment,
};

pub const FORMAT_VERSION: u32 = 1;
pub const SNAPSHOT_EVERY: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PseudoLabel {
    Cla,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleKind {
    /// Labels arrive through `post_label`.
    #[default]
    Human,
    /// The corpus labels answer queries through `answer_with_oracle`.
    Truth,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateRequest {
    /// Registered corpus name; the store default when absent.
    #[serde(default)]
    pub corpus: Option<String>,
    pub target_project: String,
    #[serde(default)]
    pub config: PolicyConfig,
    #[serde(default)]
    pub pseudo_label: Option<PseudoLabel>,
    #[serde(default)]
    pub filter: Option<FilterKind>,
    #[serde(default)]
    pub oracle: OracleKind,
}

impl CreateRequest {
    pub fn treatment(&self) -> Treatment {
        Treatment::Active {
            pseudo_label: self.pseudo_label.is_some(),
            filter: self.filter,
            policy: self.config.policy,
        }
    }
}

/// Wire form of a label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Label {
    #[serde(rename = "satd")]
    Satd,
    #[serde(rename = "not-satd")]
    NotSatd,
}

impl From<bool> for Label {
    fn from(b: bool) -> Self {
        if b {
            Label::Satd
        } else {
            Label::NotSatd
        }
    }
}

impl From<Label> for bool {
    fn from(l: Label) -> bool {
        l == Label::Satd
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    Label { comment_id: u64, label: Label },
    Stop,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Progress {
    pub reviewed: usize,
    pub found: usize,
    pub estimate: f64,
    pub target_recall: f64,
    pub stopped: bool,
    pub stop_reason: Option<StopReason>,
    pub auto_labeled: usize,
    pub pool_size: usize,
    pub phase: Option<Phase>,
    pub separated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Query {
    pub comment_id: u64,
    pub text: String,
    pub project: String,
    pub model_score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NextItem {
    pub stopped: bool,
    #[serde(flatten, skip_serializing_if = "Option::is_none")]
    pub query: Option<Query>,
    pub progress: Progress,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub session_id: String,
    pub request: CreateRequest,
    pub treatment: String,
    pub progress: Progress,
    pub events: usize,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExportFormat {
    LabelsCsv,
    TraceCsv,
    ReportJson,
}

impl std::str::FromStr for ExportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "labels_csv" => Ok(ExportFormat::LabelsCsv),
            "trace_csv" => Ok(ExportFormat::TraceCsv),
            "report_json" => Ok(ExportFormat::ReportJson),
            other => Err(Error::Config(format!(
                "unknown export format `{other}` (labels_csv, trace_csv, report_json)"
            ))),
        }
    }
}

/// Truth-dependent part of a session report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub counts: ConfusionCounts,
    #[serde(flatten)]
    pub metrics: Metrics,
    pub apfd: Option<f64>,
    pub positives: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionReport {
    pub treatment: String,
    pub project: String,
    pub seed: u64,
    pub comments: usize,
    pub reviewed: usize,
    pub found: usize,
    pub auto_labeled: usize,
    pub cost: f64,
    pub estimate: f64,
    pub stop_reason: Option<StopReason>,
    #[serde(flatten, skip_serializing_if = "Option::is_none")]
    pub evaluation: Option<Evaluation>,
}

#[derive(Debug, Serialize, Deserialize)]
struct SessionFile {
    format_version: u32,
    session_id: String,
    request: CreateRequest,
}

#[derive(Debug, Serialize, Deserialize)]
struct Snapshot {
    events: usize,
    progress: Progress,
}

/// One live session. Mutations go through the owning [`SessionStore`].
#[derive(Debug)]
pub struct Session {
    id: String,
    request: CreateRequest,
    dataset: Arc<Dataset>,
    prepared: PreparedSession,
    /// `None` when the filter auto-labeled the whole target.
    state: Option<SessionState>,
    /// Target truth by comment position, if the corpus is labeled.
    truth: Option<Vec<bool>>,
    events: Vec<Event>,
    dir: Option<PathBuf>,
    log: Option<File>,
}

impl Session {
    fn new(id: String, request: CreateRequest, dataset: Arc<Dataset>) -> Result<Self> {
        let pseudo = request.pseudo_label.is_some();
        if request.config.policy != crate::active::Policy::Emblem
            && !pseudo
            && !dataset.corpus.is_labeled()
        {
            return Err(Error::Config(
                "training labels are unavailable; request pseudo_label \"cla\"".into(),
            ));
        }
        let prepared = prepare_active(
            &dataset,
            &request.target_project,
            pseudo,
            request.filter,
            request.config.clone(),
        )?;
        let truth: Option<Vec<bool>> = prepared
            .test_rows
            .iter()
            .map(|&i| dataset.corpus.records()[i].truth)
            .collect();
        if request.oracle == OracleKind::Truth && truth.is_none() {
            return Err(Error::Config(
                "the truth oracle needs a labeled target project".into(),
            ));
        }
        let state = prepared.start()?;
        Ok(Session {
            id,
            request,
            dataset,
            prepared,
            state,
            truth,
            events: Vec::new(),
            dir: None,
            log: None,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn request(&self) -> &CreateRequest {
        &self.request
    }

    pub fn state(&self) -> Option<&SessionState> {
        self.state.as_ref()
    }

    pub fn prepared(&self) -> &PreparedSession {
        &self.prepared
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn progress(&self) -> Progress {
        let target_recall = self.request.config.target_recall;
        let auto_labeled = self.prepared.auto_labeled.len();
        match &self.state {
            Some(s) => {
                let stop_reason = s.stop_reason();
                Progress {
                    reviewed: s.reviewed(),
                    found: s.found(),
                    estimate: s.estimate(),
                    target_recall,
                    stopped: stop_reason.is_some(),
                    stop_reason,
                    auto_labeled,
                    pool_size: s.pool_size(),
                    phase: Some(s.phase()),
                    separated: s.separated(),
                }
            }
            None => Progress {
                reviewed: 0,
                found: 0,
                estimate: 0.0,
                target_recall,
                stopped: true,
                stop_reason: Some(StopReason::PoolExhausted),
                auto_labeled,
                pool_size: 0,
                phase: None,
                separated: false,
            },
        }
    }

    pub fn summary(&self) -> SessionSummary {
        SessionSummary {
            session_id: self.id.clone(),
            request: self.request.clone(),
            treatment: self.request.treatment().name(),
            progress: self.progress(),
            events: self.events.len(),
            notes: self.prepared.notes.clone(),
        }
    }

    pub fn next(&self) -> Result<NextItem> {
        let progress = self.progress();
        let state = match &self.state {
            Some(s) if !progress.stopped => s,
            _ => {
                return Ok(NextItem {
                    stopped: true,
                    query: None,
                    progress,
                })
            }
        };
        let row = state.next_query()?;
        let record =
            &self.dataset.corpus.records()[self.prepared.test_rows[self.prepared.pool[row]]];
        Ok(NextItem {
            stopped: false,
            query: Some(Query {
                comment_id: record.comment_id,
                text: record.text.clone(),
                project: record.project.clone(),
                model_score: state.score(row),
            }),
            progress,
        })
    }

    /// Pool row of a target comment id.
    fn pool_row(&self, comment_id: u64) -> Result<usize> {
        let position = usize::try_from(comment_id)
            .ok()
            .filter(|&p| p < self.prepared.test_rows.len())
            .ok_or(Error::UnknownComment(comment_id))?;
        match self.prepared.pool.binary_search(&position) {
            Ok(row) => Ok(row),
            Err(_) => Err(Error::AlreadyReviewed(position)),
        }
    }

    /// Validates and applies an event in memory.
    fn apply(&mut self, event: Event) -> Result<()> {
        match event {
            Event::Label { comment_id, label } => {
                let row = self.pool_row(comment_id)?;
                let state = self.state.as_mut().ok_or(Error::PoolExhausted)?;
                state.record_label(row, label.into())?;
            }
            Event::Stop => {
                if let Some(s) = self.state.as_mut() {
                    s.stop_manually();
                }
            }
        }
        self.events.push(event);
        Ok(())
    }

    /// Applies, then persists before returning.
    fn commit(&mut self, event: Event) -> Result<()> {
        // Validate on a clone so a failed write leaves memory and disk in step.
        if let Event::Label { comment_id, .. } = event {
            let row = self.pool_row(comment_id)?;
            let state = self.state.as_ref().ok_or(Error::PoolExhausted)?;
            if state.status()[row] != crate::active::Status::Unreviewed {
                return Err(Error::AlreadyReviewed(comment_id as usize));
            }
        }
        if let Some(log) = &mut self.log {
            let mut line = serde_json::to_string(&event)?;
            line.push('\n');
            log.write_all(line.as_bytes())
                .and_then(|_| log.sync_data())
                .map_err(|e| Error::Persistence(format!("event log of {}: {e}", self.id)))?;
        }
        self.apply(event)?;
        if self.events.len().is_multiple_of(SNAPSHOT_EVERY) || self.progress().stopped {
            self.write_snapshot()?;
        }
        Ok(())
    }

    fn write_snapshot(&self) -> Result<()> {
        let Some(dir) = &self.dir else { return Ok(()) };
        let snap = Snapshot {
            events: self.events.len(),
            progress: self.progress(),
        };
        let tmp = dir.join("snapshot.json.tmp");
        std::fs::write(&tmp, serde_json::to_vec_pretty(&snap)?).map_err(|e| Error::io(&tmp, e))?;
        let dst = dir.join("snapshot.json");
        std::fs::rename(&tmp, &dst).map_err(|e| Error::io(&dst, e))
    }

    pub fn label(&mut self, comment_id: u64, label: Label) -> Result<Progress> {
        self.commit(Event::Label { comment_id, label })?;
        Ok(self.progress())
    }

    pub fn stop(&mut self) -> Result<Progress> {
        self.commit(Event::Stop)?;
        Ok(self.progress())
    }

    /// Answers up to `max_steps` queries from the truth oracle; stops early
    /// when the session stops.
    pub fn answer_with_oracle(&mut self, max_steps: usize) -> Result<Progress> {
        if self.request.oracle != OracleKind::Truth {
            return Err(Error::Config("session uses a human oracle".into()));
        }
        let truth = self.truth.clone().expect("checked at creation");
        for _ in 0..max_steps {
            let Some(q) = self.next()?.query else { break };
            self.label(q.comment_id, truth[q.comment_id as usize].into())?;
        }
        Ok(self.progress())
    }

    pub fn export(&self, format: ExportFormat) -> Result<String> {
        match format {
            ExportFormat::LabelsCsv => self.labels_csv(),
            ExportFormat::TraceCsv => {
                let mut buf = Vec::new();
                match &self.state {
                    Some(s) => s.session_trace().write_csv(&mut buf)?,
                    None => crate::active::SessionTrace {
                        entries: Vec::new(),
                        stop_reason: Some(StopReason::PoolExhausted),
                        pool_size: 0,
                        final_estimate: 0.0,
                        separated: false,
                        estimator_converged: true,
                    }
                    .write_csv(&mut buf)?,
                }
                Ok(String::from_utf8(buf).expect("csv output is UTF-8"))
            }
            ExportFormat::ReportJson => Ok(serde_json::to_string_pretty(&self.report()?)?),
        }
    }

    fn labels_csv(&self) -> Result<String> {
        let n = self.prepared.test_rows.len();
        let mut status = vec![("unreviewed", ""); n];
        for &i in &self.prepared.auto_labeled {
            status[i] = ("auto", label_name(true));
        }
        if let Some(s) = &self.state {
            for e in s.log() {
                status[self.prepared.pool[e.row]] = ("reviewed", label_name(e.label));
            }
        }
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["comment_id", "project", "status", "label"])?;
        for (i, (st, label)) in status.iter().enumerate() {
            w.write_record([
                i.to_string().as_str(),
                self.request.target_project.as_str(),
                st,
                label,
            ])?;
        }
        let buf = w
            .into_inner()
            .map_err(|e| Error::Persistence(e.to_string()))?;
        Ok(String::from_utf8(buf).expect("csv output is UTF-8"))
    }

    pub fn report(&self) -> Result<SessionReport> {
        let trace = self.state.as_ref().map(SessionState::session_trace);
        let out = self.prepared.outcome(trace.as_ref());
        let n = self.prepared.test_rows.len();
        let treatment = self.request.treatment().name();
        let evaluation = match &self.truth {
            Some(truth) => {
                let r = score_cell(
                    &treatment,
                    &self.request.target_project,
                    Some(self.request.config.seed),
                    &out.predicted,
                    &out.order,
                    truth,
                    out.reviewed,
                    FarMode::Standard,
                )?;
                Some(Evaluation {
                    counts: r.counts,
                    metrics: r.metrics,
                    apfd: r.apfd,
                    positives: r.positives,
                })
            }
            None => None,
        };
        let progress = self.progress();
        Ok(SessionReport {
            treatment,
            project: self.request.target_project.clone(),
            seed: self.request.config.seed,
            comments: n,
            reviewed: out.reviewed,
            found: progress.found,
            auto_labeled: out.auto_labeled,
            cost: out.reviewed as f64 / n as f64,
            estimate: progress.estimate,
            stop_reason: progress.stop_reason,
            evaluation,
        })
    }
}

/// Registry of corpora and sessions. Each session sits behind its own lock.
#[derive(Debug)]
pub struct SessionStore {
    root: Option<PathBuf>,
    corpora: HashMap<String, Arc<Dataset>>,
    default_corpus: String,
    sessions: RwLock<HashMap<String, Arc<Mutex<Session>>>>,
}

impl SessionStore {
    /// A store without persistence.
    pub fn in_memory(default_corpus: &str, dataset: Dataset) -> Self {
        let mut corpora = HashMap::new();
        corpora.insert(default_corpus.to_string(), Arc::new(dataset));
        SessionStore {
            root: None,
            corpora,
            default_corpus: default_corpus.to_string(),
            sessions: RwLock::new(HashMap::new()),
        }
    }

    /// A store persisting under `root`; existing sessions are replayed.
    pub fn open(root: impl AsRef<Path>, default_corpus: &str, dataset: Dataset) -> Result<Self> {
        let root = root.as_ref().to_path_buf();
        std::fs::create_dir_all(&root).map_err(|e| Error::io(&root, e))?;
        let mut store = SessionStore::in_memory(default_corpus, dataset);
        store.root = Some(root.clone());
        let mut dirs: Vec<PathBuf> = std::fs::read_dir(&root)
            .map_err(|e| Error::io(&root, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.join("session.json").is_file())
            .collect();
        dirs.sort();
        for dir in dirs {
            let session = store.recover(&dir)?;
            log::info!(
                "recovered session {} with {} events",
                session.id,
                session.events.len()
            );
            store
                .sessions
                .write()
                .expect("session map poisoned")
                .insert(session.id.clone(), Arc::new(Mutex::new(session)));
        }
        Ok(store)
    }

    pub fn corpus_names(&self) -> Vec<String> {
        let mut v: Vec<String> = self.corpora.keys().cloned().collect();
        v.sort();
        v
    }

    pub fn session_ids(&self) -> Vec<String> {
        let mut v: Vec<String> = self
            .sessions
            .read()
            .expect("session map poisoned")
            .keys()
            .cloned()
            .collect();
        v.sort();
        v
    }

    fn dataset(&self, name: Option<&str>) -> Result<Arc<Dataset>> {
        let name = name.unwrap_or(&self.default_corpus);
        self.corpora.get(name).cloned().ok_or_else(|| {
            Error::Config(format!(
                "unknown corpus `{name}` (available: {})",
                self.corpus_names().join(", ")
            ))
        })
    }

    pub fn create(&self, request: CreateRequest) -> Result<String> {
        let dataset = self.dataset(request.corpus.as_deref())?;
        let id = Alphanumeric.sample_string(&mut rand::rng(), 16);
        let mut session = Session::new(id.clone(), request, dataset)?;
        if let Some(root) = &self.root {
            let dir = root.join(&id);
            std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
            let file = SessionFile {
                format_version: FORMAT_VERSION,
                session_id: id.clone(),
                request: session.request.clone(),
            };
            let path = dir.join("session.json");
            write_synced(&path, &serde_json::to_vec_pretty(&file)?)?;
            let log_path = dir.join("events.jsonl");
            session.log = Some(open_log(&log_path)?);
            session.dir = Some(dir);
            session.write_snapshot()?;
        }
        self.sessions
            .write()
            .expect("session map poisoned")
            .insert(id.clone(), Arc::new(Mutex::new(session)));
        Ok(id)
    }

    /// Rebuilds a session from its directory.
    fn recover(&self, dir: &Path) -> Result<Session> {
        let path = dir.join("session.json");
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let file: SessionFile = serde_json::from_str(&text)?;
        if file.format_version != FORMAT_VERSION {
            return Err(Error::Persistence(format!(
                "{}: format version {} (expected {FORMAT_VERSION})",
                path.display(),
                file.format_version
            )));
        }
        let dataset = self.dataset(file.request.corpus.as_deref())?;
        let mut session = Session::new(file.session_id, file.request, dataset)?;
        let log_path = dir.join("events.jsonl");
        let events = read_events(&log_path)?;
        let snapshot: Option<Snapshot> = std::fs::read(dir.join("snapshot.json"))
            .ok()
            .and_then(|b| serde_json::from_slice(&b).ok());
        for (i, event) in events.into_iter().enumerate() {
            session.apply(event).map_err(|e| {
                Error::Persistence(format!("replaying event {} of {}: {e}", i + 1, session.id))
            })?;
            if let Some(s) = &snapshot {
                if s.events == i + 1 && s.progress != session.progress() {
                    return Err(Error::Persistence(format!(
                        "replay of {} disagrees with its snapshot at event {}",
                        session.id, s.events
                    )));
                }
            }
        }
        session.log = Some(open_log(&log_path)?);
        session.dir = Some(dir.to_path_buf());
        Ok(session)
    }

    pub fn get(&self, id: &str) -> Result<Arc<Mutex<Session>>> {
        self.sessions
            .read()
            .expect("session map poisoned")
            .get(id)
            .cloned()
            .ok_or_else(|| Error::SessionNotFound(id.to_string()))
    }

    /// Runs `f` with the session locked.
    pub fn with<T>(&self, id: &str, f: impl FnOnce(&mut Session) -> Result<T>) -> Result<T> {
        let session = self.get(id)?;
        let mut guard = session.lock().unwrap_or_else(|p| p.into_inner());
        f(&mut guard)
    }

    pub fn summary(&self, id: &str) -> Result<SessionSummary> {
        self.with(id, |s| Ok(s.summary()))
    }

    pub fn next(&self, id: &str) -> Result<NextItem> {
        self.with(id, |s| s.next())
    }

    pub fn label(&self, id: &str, comment_id: u64, label: Label) -> Result<Progress> {
        self.with(id, |s| s.label(comment_id, label))
    }

    pub fn stop(&self, id: &str) -> Result<Progress> {
        self.with(id, |s| s.stop())
    }

    pub fn answer_with_oracle(&self, id: &str, max_steps: usize) -> Result<Progress> {
        self.with(id, |s| s.answer_with_oracle(max_steps))
    }

    pub fn export(&self, id: &str, format: ExportFormat) -> Result<String> {
        self.with(id, |s| s.export(format))
    }

    /// Review trace: `(reviewed, found)` points plus the review log.
    pub fn trace(&self, id: &str) -> Result<crate::active::SessionTrace> {
        self.with(id, |s| {
            Ok(s.state.as_ref().map_or_else(
                || crate::active::SessionTrace {
                    entries: Vec::new(),
                    stop_reason: Some(StopReason::PoolExhausted),
                    pool_size: 0,
                    final_estimate: 0.0,
                    separated: false,
                    estimator_converged: true,
                },
                SessionState::session_trace,
            ))
        })
    }
}

fn write_synced(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes)
        .and_then(|_| f.sync_all())
        .map_err(|e| Error::io(path, e))
}

fn open_log(path: &Path) -> Result<File> {
    OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))
}

/// Reads an event log. A final line without a newline was never
/// acknowledged; it is dropped and truncated away.
fn read_events(path: &Path) -> Result<Vec<Event>> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(Error::io(path, e)),
    };
    let mut events = Vec::new();
    let mut reader = BufReader::new(file);
    let mut line = String::new();
    let mut good_bytes = 0u64;
    loop {
        line.clear();
        let n = reader
            .read_line(&mut line)
            .map_err(|e| Error::io(path, e))?;
        if n == 0 {
            break;
        }
        if !line.ends_with('\n') {
            log::warn!(
                "dropping unacknowledged partial event in {}",
                path.display()
            );
            let f = OpenOptions::new()
                .write(true)
                .open(path)
                .map_err(|e| Error::io(path, e))?;
            f.set_len(good_bytes).map_err(|e| Error::io(path, e))?;
            break;
        }
        events.push(serde_json::from_str(line.trim_end())?);
        good_bytes += n as u64;
    }
    Ok(events)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::active::Policy;
    use crate::synthetic::{generate, SyntheticSpec};

    fn dataset() -> Dataset {
        Dataset::new(generate(&SyntheticSpec::uniform(3, 150, 15, 9)), 4000).unwrap()
    }

    fn request(policy: Policy, oracle: OracleKind) -> CreateRequest {
        CreateRequest {
            corpus: None,
            target_project: "project-a".into(),
            config: PolicyConfig {
                n_trees: 10,
                retrain_every: 5,
                ..PolicyConfig::new(policy, 3)
            },
            pseudo_label: (policy != Policy::Emblem).then_some(PseudoLabel::Cla),
            filter: None,
            oracle,
        }
    }

    #[test]
    fn request_json_shape() {
        let r: CreateRequest = serde_json::from_str(
            r#"{"target_project": "p", "config": {"policy": "hard", "seed": 4}, "filter": "cla"}"#,
        )
        .unwrap();
        assert_eq!(r.config.policy, Policy::Hard);
        assert_eq!(r.config.n2, 10);
        assert_eq!(r.filter, Some(FilterKind::Cla));
        assert_eq!(r.treatment().name(), "F+Hard");
        assert!(
            serde_json::from_str::<CreateRequest>(r#"{"target_project": "p", "x": 1}"#).is_err()
        );
        assert_eq!(
            serde_json::to_string(&Label::NotSatd).unwrap(),
            "\"not-satd\""
        );
    }

    #[test]
    fn labeling_and_conflicts() {
        let store = SessionStore::in_memory("default", dataset());
        let id = store
            .create(request(Policy::Falcon, OracleKind::Human))
            .unwrap();
        let next = store.next(&id).unwrap();
        assert!(!next.stopped);
        assert!(next.progress.estimate > 0.0);
        let q = next.query.unwrap();
        let p = store.label(&id, q.comment_id, Label::Satd).unwrap();
        assert_eq!((p.found, p.reviewed), (1, 1));
        let before = store.summary(&id).unwrap();
        assert!(matches!(
            store.label(&id, q.comment_id, Label::Satd),
            Err(Error::AlreadyReviewed(_))
        ));
        assert_eq!(store.summary(&id).unwrap(), before);
        assert!(matches!(
            store.label(&id, 10_000, Label::Satd),
            Err(Error::UnknownComment(_))
        ));
        assert!(matches!(store.next("nope"), Err(Error::SessionNotFound(_))));
    }

    #[test]
    fn fresh_trace_export_is_header_only() {
        let store = SessionStore::in_memory("default", dataset());
        let id = store
            .create(request(Policy::Hard, OracleKind::Human))
            .unwrap();
        let csv = store.export(&id, ExportFormat::TraceCsv).unwrap();
        assert_eq!(csv.lines().count(), 1);
        let labels = store.export(&id, ExportFormat::LabelsCsv).unwrap();
        assert_eq!(labels.lines().count(), 151);
    }

    #[test]
    fn human_report_without_truth_omits_metrics() {
        let mut ds = dataset();
        let records = ds
            .corpus
            .records()
            .iter()
            .cloned()
            .map(|mut r| {
                r.truth = None;
                r
            })
            .collect();
        ds.corpus = crate::corpus::Corpus::from_records(records);
        let store = SessionStore::in_memory("default", ds);
        let id = store
            .create(request(Policy::Falcon, OracleKind::Human))
            .unwrap();
        let json = store.export(&id, ExportFormat::ReportJson).unwrap();
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert!(v.get("cost").is_some() && v.get("estimate").is_some());
        assert!(v.get("recall").is_none());
        let err = store.create(request(Policy::Falcon, OracleKind::Truth));
        assert!(matches!(err, Err(Error::Config(_))));
    }

    #[test]
    fn emblem_with_filter_is_a_validation_error() {
        let store = SessionStore::in_memory("default", dataset());
        let mut r = request(Policy::Emblem, OracleKind::Human);
        r.filter = Some(FilterKind::Easy);
        assert!(matches!(store.create(r), Err(Error::Config(_))));
    }

    #[test]
    fn replay_after_restart_reproduces_state() {
        let dir = tempfile::tempdir().unwrap();
        let id = {
            let store = SessionStore::open(dir.path(), "default", dataset()).unwrap();
            let id = store
                .create(request(Policy::Falcon, OracleKind::Truth))
                .unwrap();
            store.answer_with_oracle(&id, 23).unwrap();
            id
        };
        let reopened = SessionStore::open(dir.path(), "default", dataset()).unwrap();
        let fresh = SessionStore::in_memory("default", dataset());
        let fresh_id = fresh
            .create(reopened.summary(&id).unwrap().request)
            .unwrap();
        fresh.answer_with_oracle(&fresh_id, 23).unwrap();
        let a = reopened.get(&id).unwrap();
        let b = fresh.get(&fresh_id).unwrap();
        assert_eq!(a.lock().unwrap().state(), b.lock().unwrap().state());
        assert_eq!(reopened.next(&id).unwrap(), fresh.next(&fresh_id).unwrap());
    }

    #[test]
    fn partial_trailing_event_is_dropped() {
        let dir = tempfile::tempdir().unwrap();
        let id = {
            let store = SessionStore::open(dir.path(), "default", dataset()).unwrap();
            let id = store
                .create(request(Policy::Hard, OracleKind::Truth))
                .unwrap();
            store.answer_with_oracle(&id, 3).unwrap();
            id
        };
        let log = dir.path().join(&id).join("events.jsonl");
        let mut f = OpenOptions::new().append(true).open(&log).unwrap();
        f.write_all(br#"{"event":"label","comm"#).unwrap();
        drop(f);
        let store = SessionStore::open(dir.path(), "default", dataset()).unwrap();
        assert_eq!(store.summary(&id).unwrap().events, 3);
        assert_eq!(std::fs::read_to_string(&log).unwrap().lines().count(), 3);
    }
}
