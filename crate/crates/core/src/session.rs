//! Live test sessions persisted as append-only event logs.
//!
//! Every session is one JSON-lines file in the data directory. The first
//! line creates the session; each later line records one outcome (or the
//! abandonment). Loading a session folds its log through the design engine
//! and checks every logged recommendation and coin position on the way.

use std::collections::BTreeMap;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::design::{
    Classification, DesignConfig, DesignKind, DesignState, LimitingType, Machine, StepScale, TrialRecord,
};
use crate::error::{Error, Result};
use crate::estimate::{cir_quantile, fieller_ci, fit_probit_mle, rmj_provisional, QuantileEstimate, XScale};
use crate::rng::RngState;
use crate::sim::ExportFormat;

pub const LOG_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SessionStatus {
    Active,
    Terminated,
    Abandoned,
}

fn default_unit() -> String {
    "N".into()
}

fn default_level() -> f64 {
    0.9
}

/// What the operator asks for when opening a session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionSpec {
    pub config: DesignConfig,
    #[serde(default)]
    pub material: String,
    #[serde(default = "default_unit")]
    pub unit: String,
    /// Level of the running confidence intervals.
    #[serde(default = "default_level")]
    pub level: f64,
}

impl SessionSpec {
    pub fn new(config: DesignConfig, material: impl Into<String>, unit: impl Into<String>) -> Self {
        Self {
            config,
            material: material.into(),
            unit: unit.into(),
            level: 0.9,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut errs = match self.config.validate() {
            Err(Error::Config(e)) => e,
            Err(e) => return Err(e),
            Ok(()) => Vec::new(),
        };
        if !(self.level > 0.0 && self.level < 1.0) {
            errs.push(crate::error::FieldError::new("level", "must lie in (0, 1)"));
        }
        if self.unit.trim().is_empty() {
            errs.push(crate::error::FieldError::new("unit", "must not be empty"));
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "kebab-case")]
pub enum Event {
    Created {
        id: String,
        spec: SessionSpec,
        rng: RngState,
    },
    Outcome {
        seq: usize,
        outcome: u8,
        /// Stimulus actually used when it differed from the recommendation.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        stimulus: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        note: Option<String>,
        /// Coin stream position after the trial.
        rng_pos: u64,
        /// Recommendation after the trial; `None` once terminated.
        next: Option<f64>,
    },
    Abandoned {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        reason: Option<String>,
    },
}

/// One line of a session log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub v: u32,
    pub at: DateTime<Utc>,
    #[serde(flatten)]
    pub event: Event,
}

/// Body of an outcome submission.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutcomeRequest {
    pub outcome: u8,
    /// Sequence number of the recommendation being answered.
    pub echo: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stimulus: Option<f64>,
}

impl OutcomeRequest {
    pub fn new(outcome: u8, echo: usize) -> Self {
        Self {
            outcome,
            echo,
            note: None,
            stimulus: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    pub stimulus: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_label: Option<String>,
    pub seq: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    #[serde(flatten)]
    pub trial: TrialRecord,
    pub at: DateTime<Utc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    pub overridden: bool,
}

/// Where a staircase stands, under both readings of its result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StaircaseProgress {
    pub k: usize,
    /// Consecutive negatives at the current level.
    pub negatives: usize,
    pub limiting_type: LimitingType,
    pub type_i: Option<f64>,
    pub type_ii: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classification: Option<Classification>,
    pub floor_hit: bool,
}

/// Everything a client needs to render a session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub id: String,
    pub created_at: DateTime<Utc>,
    pub material: String,
    pub unit: String,
    pub level: f64,
    pub status: SessionStatus,
    pub design: DesignKind,
    pub config: DesignConfig,
    pub seq: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub planned_trials: Option<usize>,
    pub recommendation: Option<Recommendation>,
    pub history: Vec<HistoryEntry>,
    pub estimate: Option<QuantileEstimate>,
    /// Why `estimate` is absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimate_note: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub staircase: Option<StaircaseProgress>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub id: String,
    pub created_at: DateTime<Utc>,
    pub material: String,
    pub design: DesignKind,
    pub status: SessionStatus,
    pub trials: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Session {
    pub id: String,
    pub created_at: DateTime<Utc>,
    pub spec: SessionSpec,
    pub state: DesignState,
    pub status: SessionStatus,
    pub log: Vec<LogEntry>,
}

impl Session {
    pub fn create(id: impl Into<String>, spec: SessionSpec, rng: RngState, at: DateTime<Utc>) -> Result<Self> {
        let entry = LogEntry {
            v: LOG_VERSION,
            at,
            event: Event::Created {
                id: id.into(),
                spec,
                rng,
            },
        };
        Self::from_log(&[entry])
    }

    /// Fold a log into a session, checking each outcome against its record.
    pub fn from_log(entries: &[LogEntry]) -> Result<Self> {
        let Some((first, rest)) = entries.split_first() else {
            return Err(Error::State("empty session log".into()));
        };
        check_version(first)?;
        let Event::Created { id, spec, rng } = &first.event else {
            return Err(Error::State("session log does not start with a creation event".into()));
        };
        spec.validate()?;
        let state = DesignState::new(spec.config.clone(), *rng)?;
        let mut s = Session {
            id: id.clone(),
            created_at: first.at,
            spec: spec.clone(),
            status: status_of(&state),
            state,
            log: vec![first.clone()],
        };
        for e in rest {
            s.apply(e.clone())?;
        }
        Ok(s)
    }

    pub fn seq(&self) -> usize {
        self.state.history.len()
    }

    fn check_open(&self) -> Result<()> {
        if self.status == SessionStatus::Active {
            Ok(())
        } else {
            Err(Error::SessionClosed(self.id.clone()))
        }
    }

    /// The log entry that `req` would append, without changing the session.
    pub fn outcome_entry(&self, req: &OutcomeRequest, at: DateTime<Utc>) -> Result<LogEntry> {
        self.check_open()?;
        if req.echo != self.seq() {
            return Err(Error::StaleEcho {
                expected: self.seq(),
                got: req.echo,
            });
        }
        let mut st = self.state.clone();
        advance(&mut st, req.stimulus, req.outcome)?;
        Ok(LogEntry {
            v: LOG_VERSION,
            at,
            event: Event::Outcome {
                seq: req.echo,
                outcome: req.outcome,
                stimulus: req.stimulus,
                note: req.note.clone(),
                rng_pos: st.rng.word_pos,
                next: st.next.as_ref().map(|n| n.stimulus),
            },
        })
    }

    pub fn abandon_entry(&self, reason: Option<String>, at: DateTime<Utc>) -> Result<LogEntry> {
        self.check_open()?;
        Ok(LogEntry {
            v: LOG_VERSION,
            at,
            event: Event::Abandoned { reason },
        })
    }

    /// Apply one logged event.
    pub fn apply(&mut self, entry: LogEntry) -> Result<()> {
        check_version(&entry)?;
        match &entry.event {
            Event::Created { .. } => return Err(Error::State("duplicate creation event".into())),
            Event::Outcome {
                seq,
                outcome,
                stimulus,
                rng_pos,
                next,
                ..
            } => {
                self.check_open()?;
                if *seq != self.seq() {
                    return Err(Error::StaleEcho {
                        expected: self.seq(),
                        got: *seq,
                    });
                }
                let mut st = self.state.clone();
                advance(&mut st, *stimulus, *outcome)?;
                let got = st.next.as_ref().map(|n| n.stimulus);
                let same_next = match (got, next) {
                    (Some(a), Some(b)) => a.to_bits() == b.to_bits(),
                    (None, None) => true,
                    _ => false,
                };
                if st.rng.word_pos != *rng_pos || !same_next {
                    return Err(Error::State(format!(
                        "session {} diverges from its log at trial {}",
                        self.id,
                        seq + 1
                    )));
                }
                self.status = status_of(&st);
                self.state = st;
            }
            Event::Abandoned { .. } => {
                self.check_open()?;
                self.status = SessionStatus::Abandoned;
            }
        }
        self.log.push(entry);
        Ok(())
    }

    pub fn dataset(&self) -> Dataset {
        Dataset::new(self.spec.unit.clone(), self.state.history.clone())
    }

    /// Running estimate, or the reason there is none yet.
    pub fn running_estimate(&self) -> (Option<QuantileEstimate>, Option<String>) {
        let level = self.spec.level;
        let res = match &self.spec.config {
            DesignConfig::Un(_) => return (None, None),
            _ if self.state.history.is_empty() => return (None, Some("no trials recorded".into())),
            DesignConfig::Bcd(c) => {
                let scale = match c.step_scale {
                    StepScale::Log => XScale::Log,
                    StepScale::Linear => XScale::Natural,
                };
                cir_quantile(&self.dataset(), c.p, level, scale)
            }
            DesignConfig::UpDown(_) => {
                fit_probit_mle(&self.dataset()).and_then(|fit| fieller_ci(&fit, 0.5, level))
            }
            DesignConfig::Rmj(c) => rmj_provisional(&self.state, c.p, level),
        };
        match res {
            Ok(q) => (Some(q), None),
            Err(e) => (None, Some(e.to_string())),
        }
    }

    fn staircase(&self) -> Option<StaircaseProgress> {
        let (Machine::Un(m), DesignConfig::Un(c)) = (&self.state.machine, &self.spec.config) else {
            return None;
        };
        let value = m.value(c);
        Some(StaircaseProgress {
            k: c.k,
            negatives: m.negatives,
            limiting_type: c.limiting_type,
            type_i: m.type_i(&c.grid),
            type_ii: m.type_ii(&c.grid),
            threshold: c.threshold,
            classification: match (value, c.threshold) {
                (Some(v), Some(t)) => Some(crate::design::classify(v, t)),
                _ => None,
            },
            floor_hit: m.floor_hit,
        })
    }

    pub fn view(&self) -> SessionView {
        let (estimate, estimate_note) = self.running_estimate();
        let mut history = Vec::with_capacity(self.seq());
        for e in &self.log {
            if let Event::Outcome { seq, stimulus, note, .. } = &e.event {
                history.push(HistoryEntry {
                    trial: self.state.history[*seq].clone(),
                    at: e.at,
                    note: note.clone(),
                    overridden: stimulus.is_some(),
                });
            }
        }
        SessionView {
            id: self.id.clone(),
            created_at: self.created_at,
            material: self.spec.material.clone(),
            unit: self.spec.unit.clone(),
            level: self.spec.level,
            status: self.status,
            design: self.state.kind(),
            config: self.spec.config.clone(),
            seq: self.seq(),
            planned_trials: self.spec.config.planned_trials(),
            recommendation: match (self.status, &self.state.next) {
                (SessionStatus::Active, Some(n)) => Some(Recommendation {
                    stimulus: n.stimulus,
                    grid_label: n.grid_label.clone(),
                    seq: self.seq(),
                }),
                _ => None,
            },
            history,
            estimate,
            estimate_note,
            staircase: self.staircase(),
        }
    }

    pub fn summary(&self) -> SessionSummary {
        SessionSummary {
            id: self.id.clone(),
            created_at: self.created_at,
            material: self.spec.material.clone(),
            design: self.state.kind(),
            status: self.status,
            trials: self.seq(),
        }
    }

    /// The session's trials in the dataset format.
    pub fn export(&self, format: ExportFormat) -> Result<String> {
        let ds = self.dataset();
        match format {
            ExportFormat::Csv => ds.to_csv_string(),
            ExportFormat::Json => Ok(serde_json::to_string_pretty(&ds)? + "\n"),
        }
    }
}

fn check_version(e: &LogEntry) -> Result<()> {
    if e.v == LOG_VERSION {
        Ok(())
    } else {
        Err(Error::State(format!("unsupported session log version {}", e.v)))
    }
}

fn status_of(st: &DesignState) -> SessionStatus {
    if st.is_terminated() {
        SessionStatus::Terminated
    } else {
        SessionStatus::Active
    }
}

fn advance(st: &mut DesignState, stimulus: Option<f64>, y: u8) -> Result<()> {
    match stimulus {
        Some(x) => st.record_at(x, y),
        None => st.record(y),
    }
}

/// Serialize a log as JSON lines.
pub fn log_to_jsonl(entries: &[LogEntry]) -> Result<String> {
    let mut out = String::new();
    for e in entries {
        out.push_str(&serde_json::to_string(e)?);
        out.push('\n');
    }
    Ok(out)
}

/// Parse a JSON-lines log. An unterminated final line is a torn write and
/// is dropped; its byte offset is returned so the file can be truncated.
pub fn parse_log(text: &str) -> Result<(Vec<LogEntry>, Option<usize>)> {
    let (body, torn) = match text.rfind('\n') {
        Some(i) if i + 1 < text.len() => (&text[..=i], Some(i + 1)),
        Some(_) => (text, None),
        None if text.is_empty() => (text, None),
        None => ("", Some(0)),
    };
    let mut entries = Vec::new();
    for (n, line) in body.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let e = serde_json::from_str(line)
            .map_err(|e| Error::State(format!("session log line {} is corrupt: {e}", n + 1)))?;
        entries.push(e);
    }
    Ok((entries, torn))
}

/// All sessions of one data directory (or of memory only).
pub struct SessionStore {
    dir: Option<PathBuf>,
    master_seed: u64,
    sessions: RwLock<BTreeMap<String, Arc<Mutex<Session>>>>,
}

impl SessionStore {
    pub fn in_memory(master_seed: u64) -> Self {
        Self {
            dir: None,
            master_seed,
            sessions: RwLock::new(BTreeMap::new()),
        }
    }

    /// Open `dir`, replaying every `*.jsonl` log in it.
    pub fn open(dir: impl Into<PathBuf>, master_seed: u64) -> Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let mut sessions = BTreeMap::new();
        let rd = std::fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))?;
        for ent in rd {
            let path = ent.map_err(|e| Error::io(&dir, e))?.path();
            if path.extension().is_some_and(|x| x == "jsonl") {
                let s = load_log_file(&path)?;
                sessions.insert(s.id.clone(), Arc::new(Mutex::new(s)));
            }
        }
        Ok(Self {
            dir: Some(dir),
            master_seed,
            sessions: RwLock::new(sessions),
        })
    }

    pub fn data_dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    pub fn log_path(&self, id: &str) -> Option<PathBuf> {
        self.dir.as_ref().map(|d| d.join(format!("{id}.jsonl")))
    }

    fn persist(&self, id: &str, entry: &LogEntry) -> Result<()> {
        let Some(path) = self.log_path(id) else {
            return Ok(());
        };
        let mut line = serde_json::to_vec(entry)?;
        line.push(b'\n');
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;
        f.write_all(&line).map_err(|e| Error::io(&path, e))?;
        f.sync_data().map_err(|e| Error::io(&path, e))
    }

    fn session(&self, id: &str) -> Result<Arc<Mutex<Session>>> {
        self.sessions
            .read()
            .expect("session map lock")
            .get(id)
            .cloned()
            .ok_or_else(|| Error::UnknownSession(id.to_string()))
    }

    pub fn create(&self, spec: SessionSpec) -> Result<SessionView> {
        spec.validate()?;
        let uuid = uuid::Uuid::new_v4();
        let id = uuid.simple().to_string();
        let stream = uuid.as_u64_pair().0;
        let s = Session::create(id.clone(), spec, RngState::new(self.master_seed, stream), Utc::now())?;
        self.persist(&id, &s.log[0])?;
        let view = s.view();
        self.sessions
            .write()
            .expect("session map lock")
            .insert(id, Arc::new(Mutex::new(s)));
        Ok(view)
    }

    /// Record an outcome. The event is on disk before this returns.
    pub fn record(&self, id: &str, req: &OutcomeRequest) -> Result<SessionView> {
        let cell = self.session(id)?;
        let mut s = cell.lock().expect("session lock");
        let entry = s.outcome_entry(req, Utc::now())?;
        self.persist(id, &entry)?;
        s.apply(entry)?;
        Ok(s.view())
    }

    pub fn abandon(&self, id: &str, reason: Option<String>) -> Result<SessionView> {
        let cell = self.session(id)?;
        let mut s = cell.lock().expect("session lock");
        let entry = s.abandon_entry(reason, Utc::now())?;
        self.persist(id, &entry)?;
        s.apply(entry)?;
        Ok(s.view())
    }

    pub fn get(&self, id: &str) -> Result<SessionView> {
        Ok(self.session(id)?.lock().expect("session lock").view())
    }

    pub fn list(&self) -> Vec<SessionSummary> {
        let cells: Vec<_> = self.sessions.read().expect("session map lock").values().cloned().collect();
        let mut out: Vec<SessionSummary> = cells.iter().map(|c| c.lock().expect("session lock").summary()).collect();
        out.sort_by(|a, b| a.created_at.cmp(&b.created_at).then_with(|| a.id.cmp(&b.id)));
        out
    }

    pub fn export(&self, id: &str, format: ExportFormat) -> Result<String> {
        self.session(id)?.lock().expect("session lock").export(format)
    }
}

/// Load one log file, truncating a torn final line.
pub fn load_log_file(path: &Path) -> Result<Session> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let (entries, torn) = parse_log(&text)?;
    if let Some(len) = torn {
        let f = OpenOptions::new().write(true).open(path).map_err(|e| Error::io(path, e))?;
        f.set_len(len as u64).map_err(|e| Error::io(path, e))?;
        f.sync_data().map_err(|e| Error::io(path, e))?;
    }
    Session::from_log(&entries)
}
