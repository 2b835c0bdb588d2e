use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::sync::{Arc, Mutex, MutexGuard};

use chrono::{DateTime, Duration, SecondsFormat, Utc};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use trustloop::bandit::{build_catalogs, ArmCatalog, ArmId, BanditBook, BanditSnapshot, Part, PullRecord, Role};
use trustloop::evidence::{EvidenceCatalog, EvidenceItem};
use trustloop::rater::PATIENTS_PER_SESSION;
use trustloop::report::{export_csv, ArmReport, ExportFilter, ResponseRow};

use crate::error::ServiceError;
use crate::session::{Expect, Outcome, SessionRecord, SessionStatus, StepType};
use crate::store::{Recovered, SessionEvent, Store};

pub const API_SCHEMA_VERSION: u32 = 1;

/// Sessions idle longer than this are abandoned.
pub const ABANDON_AFTER_HOURS: i64 = 24;

pub trait Clock: Send + Sync {
    fn now(&self) -> DateTime<Utc>;
}

pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> DateTime<Utc> {
        Utc::now()
    }
}

/// A clock that only moves when told to.
pub struct ManualClock(Mutex<DateTime<Utc>>);

impl ManualClock {
    pub fn new(start: DateTime<Utc>) -> Self {
        ManualClock(Mutex::new(start))
    }

    pub fn advance(&self, by: Duration) {
        *self.0.lock().expect("clock lock") += by;
    }
}

impl Default for ManualClock {
    fn default() -> Self {
        ManualClock::new(DateTime::from_timestamp(1_767_225_600, 0).expect("valid epoch"))
    }
}

impl Clock for ManualClock {
    fn now(&self) -> DateTime<Utc> {
        *self.0.lock().expect("clock lock")
    }
}

fn stamp(t: DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::Millis, true)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ServiceConfig {
    pub seed: u64,
    pub abandon_after_hours: i64,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig { seed: 0, abandon_after_hours: ABANDON_AFTER_HOURS }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionStart {
    pub schema_version: u32,
    pub session_id: String,
    pub role: Role,
    pub part1_arm: ArmId,
    pub part2_arm: ArmId,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PayloadType {
    Evidence,
    Confidence,
    Transition,
    Complete,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Progress {
    /// Steps answered so far.
    pub done: usize,
    pub total: usize,
}

/// What the client should show next.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepPayload {
    pub schema_version: u32,
    pub session_id: String,
    #[serde(rename = "type")]
    pub payload_type: PayloadType,
    pub step_ref: Option<usize>,
    pub part: Option<Part>,
    pub step_index: Option<usize>,
    pub patient_index: Option<usize>,
    pub expects: Expect,
    pub evidence: Option<EvidenceItem>,
    pub prompt: Option<String>,
    pub progress: Progress,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Submission {
    pub kind: Expect,
    #[serde(default)]
    pub rating: Option<i64>,
    pub step_ref: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardNote {
    pub part: Part,
    pub arm: ArmId,
    pub reward: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ack {
    pub schema_version: u32,
    pub session_id: String,
    pub step_ref: usize,
    pub status: SessionStatus,
    pub reward: Option<RewardNote>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub schema_version: u32,
    pub service: String,
    pub version: String,
    pub arms: BTreeMap<String, Vec<ArmId>>,
    pub n_patients: usize,
    pub sessions: usize,
    pub pulls: u64,
    pub persistent: bool,
}

fn prompt(role: Role, step_type: StepType, part: Part) -> &'static str {
    match (role, step_type, part) {
        (Role::Clinician, StepType::Evidence, Part::One) => {
            "How useful is this information when deciding whether to trust the model?"
        }
        (Role::MlExpert, StepType::Evidence, Part::One) => {
            "How much would this information increase the average clinician's trust in the model?"
        }
        (_, StepType::Evidence, Part::Two) => "Review this information about the patient.",
        (Role::Clinician, StepType::Confidence, Part::One) => {
            "Given what you have seen, how confident are you in the model's predictions?"
        }
        (Role::MlExpert, StepType::Confidence, Part::One) => {
            "Given this information, how confident would the average clinician be in the model's predictions?"
        }
        (Role::Clinician, StepType::Confidence, Part::Two) => {
            "How confident are you in the model's risk estimate for this patient?"
        }
        (Role::MlExpert, StepType::Confidence, Part::Two) => {
            "How confident would the average clinician be in the model's risk estimate for this patient?"
        }
        (_, StepType::Transition, _) => "The first part is complete. Next come four patient cases.",
    }
}

/// Session and bandit state rebuilt from a data directory, read-only.
#[derive(Clone, Debug)]
pub struct LoadedState {
    pub sessions: Vec<SessionRecord>,
    pub responses: Vec<ResponseRow>,
    pub pulls: Vec<PullRecord>,
    pub snapshot: BanditSnapshot,
    part1: ArmCatalog,
    part2: ArmCatalog,
}

impl LoadedState {
    pub fn report(&self, filter: &ExportFilter) -> Result<ArmReport, ServiceError> {
        Ok(ArmReport::filtered(&self.responses, &self.part1, &self.part2, filter)?)
    }

    pub fn responses(&self, filter: &ExportFilter) -> Vec<ResponseRow> {
        self.responses.iter().filter(|r| filter.admits(r.role, r.part)).cloned().collect()
    }
}

/// Replays a data directory's logs over the standard catalogs. Fails when the
/// directory holds no session log.
pub fn load_data_dir(dir: &Path) -> Result<LoadedState, ServiceError> {
    let (p1, p2) = build_catalogs();
    load_data_dir_with(dir, p1, p2)
}

pub fn load_data_dir_with(dir: &Path, part1: ArmCatalog, part2: ArmCatalog) -> Result<LoadedState, ServiceError> {
    if !dir.join(crate::store::SESSIONS_LOG).is_file() {
        return Err(ServiceError::Invalid(format!("no response log in {}", dir.display())));
    }
    let recovered = Store::read(dir)?;
    let mut inner = Inner::new(BanditBook::new(part1.clone(), part2.clone())?, Store::in_memory());
    inner.replay(recovered)?;
    let mut sessions: Vec<SessionRecord> = inner.sessions.into_values().collect();
    sessions.sort_by(|a, b| (&a.started_at, &a.session_id).cmp(&(&b.started_at, &b.session_id)));
    Ok(LoadedState {
        sessions,
        responses: inner.responses,
        pulls: inner.pulls,
        snapshot: inner.book.snapshot(),
        part1,
        part2,
    })
}

struct Inner {
    book: BanditBook<f64>,
    sessions: HashMap<String, SessionRecord>,
    last_active: BTreeMap<String, DateTime<Utc>>,
    responses: Vec<ResponseRow>,
    pulls: Vec<PullRecord>,
    store: Store,
    n_started: u64,
}

/// The survey orchestrator. All mutation happens under one lock, so bandit
/// selections always see every reward recorded before them.
pub struct SurveyService {
    inner: Mutex<Inner>,
    evidence: EvidenceCatalog,
    clock: Arc<dyn Clock>,
    config: ServiceConfig,
}

impl SurveyService {
    /// Service over the standard arm catalogs, persisting into `data_dir` if given.
    pub fn open(evidence: EvidenceCatalog, data_dir: Option<&Path>, config: ServiceConfig, clock: Arc<dyn Clock>) -> Result<Self, ServiceError> {
        let (p1, p2) = build_catalogs();
        Self::with_catalogs(evidence, p1, p2, data_dir, config, clock)
    }

    pub fn with_catalogs(
        evidence: EvidenceCatalog,
        part1: ArmCatalog,
        part2: ArmCatalog,
        data_dir: Option<&Path>,
        config: ServiceConfig,
        clock: Arc<dyn Clock>,
    ) -> Result<Self, ServiceError> {
        if evidence.n_patients() < PATIENTS_PER_SESSION {
            return Err(ServiceError::Invalid(format!(
                "evidence bundle has {} patient cases, need {PATIENTS_PER_SESSION}",
                evidence.n_patients()
            )));
        }
        let (store, recovered) = match data_dir {
            Some(d) => Store::open(d)?,
            None => (Store::in_memory(), Recovered::default()),
        };
        let mut inner = Inner::new(BanditBook::new(part1, part2)?, store);
        inner.replay(recovered)?;
        inner.store.write_snapshot(&inner.book.snapshot())?;
        Ok(SurveyService { inner: Mutex::new(inner), evidence, clock, config })
    }

    fn lock(&self) -> MutexGuard<'_, Inner> {
        // a panic mid-update cannot leave partial state: every mutation is applied after its log write
        self.inner.lock().unwrap_or_else(|p| p.into_inner())
    }

    fn now(&self) -> DateTime<Utc> {
        self.clock.now()
    }

    pub fn evidence(&self) -> &EvidenceCatalog {
        &self.evidence
    }

    pub fn catalogs(&self) -> (ArmCatalog, ArmCatalog) {
        let g = self.lock();
        (g.book.catalog(Part::One).clone(), g.book.catalog(Part::Two).clone())
    }

    pub fn catalog(&self, part: Part) -> ArmCatalog {
        self.lock().book.catalog(part).clone()
    }

    fn session_id(&self, n: u64) -> String {
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        rng.set_stream(n);
        let mut bytes = [0u8; 16];
        rng.fill_bytes(&mut bytes);
        uuid::Builder::from_random_bytes(bytes).into_uuid().to_string()
    }

    pub fn start_session(&self, role: Role) -> Result<SessionStart, ServiceError> {
        let now = self.now();
        let mut g = self.lock();
        g.sweep(now, self.config.abandon_after_hours)?;
        let a1 = g.book.select(Part::One, role)?;
        let a2 = g.book.select(Part::Two, role)?;
        let mut n = g.n_started;
        let mut id = self.session_id(n);
        while g.sessions.contains_key(&id) {
            n += 1;
            id = self.session_id(n);
        }
        let ts = stamp(now);
        g.store.append_event(&SessionEvent::Started {
            session_id: id.clone(),
            role,
            part1_arm: a1,
            part2_arm: a2,
            timestamp: ts.clone(),
        })?;
        g.start(id.clone(), role, a1, a2, ts, now)?;
        Ok(SessionStart { schema_version: API_SCHEMA_VERSION, session_id: id, role, part1_arm: a1, part2_arm: a2 })
    }

    /// The step at the session's cursor. Repeating the call returns the same step.
    pub fn next_step(&self, session_id: &str) -> Result<StepPayload, ServiceError> {
        let now = self.now();
        let mut g = self.lock();
        g.sweep(now, self.config.abandon_after_hours)?;
        let s = g.sessions.get(session_id).ok_or_else(|| ServiceError::UnknownSession(session_id.to_owned()))?;
        self.payload(s)
    }

    fn payload(&self, s: &SessionRecord) -> Result<StepPayload, ServiceError> {
        let total = s.steps().len();
        let mut p = StepPayload {
            schema_version: API_SCHEMA_VERSION,
            session_id: s.session_id.clone(),
            payload_type: PayloadType::Complete,
            step_ref: None,
            part: None,
            step_index: None,
            patient_index: None,
            expects: Expect::None,
            evidence: None,
            prompt: None,
            progress: Progress { done: s.cursor, total },
        };
        match s.status {
            SessionStatus::Abandoned => return Err(ServiceError::SessionAbandoned(s.session_id.clone())),
            SessionStatus::Complete => return Ok(p),
            SessionStatus::InProgress => {}
        }
        let step = *s.current().expect("in-progress session has a current step");
        p.payload_type = match step.step_type {
            StepType::Evidence => PayloadType::Evidence,
            StepType::Confidence => PayloadType::Confidence,
            StepType::Transition => PayloadType::Transition,
        };
        p.step_ref = Some(s.cursor);
        p.part = Some(step.part);
        p.step_index = Some(step.index_in_part);
        p.patient_index = step.patient_index;
        p.expects = step.expects;
        p.prompt = Some(prompt(s.role, step.step_type, step.part).to_owned());
        if let Some(kind) = step.kind {
            p.evidence = Some(self.evidence.item(kind, step.patient_index)?);
        }
        Ok(p)
    }

    pub fn submit(&self, session_id: &str, sub: &Submission) -> Result<Ack, ServiceError> {
        let now = self.now();
        let mut g = self.lock();
        g.sweep(now, self.config.abandon_after_hours)?;
        let ts = stamp(now);
        let mut s = g.sessions.get(session_id).cloned().ok_or_else(|| ServiceError::UnknownSession(session_id.to_owned()))?;
        let outcome = s.answer(sub.step_ref, sub.kind, sub.rating, &ts)?;
        g.store.append_event(&SessionEvent::Answered {
            session_id: session_id.to_owned(),
            step_ref: sub.step_ref,
            kind: sub.kind,
            rating: sub.rating,
            timestamp: ts.clone(),
        })?;
        let status = s.status;
        let reward = outcome.pull.map(|(part, reward)| RewardNote {
            part,
            arm: if part == Part::One { s.part1_arm } else { s.part2_arm },
            reward,
        });
        g.commit(s, outcome, &ts, now, true)?;
        Ok(Ack { schema_version: API_SCHEMA_VERSION, session_id: session_id.to_owned(), step_ref: sub.step_ref, status, reward })
    }

    pub fn session(&self, session_id: &str) -> Result<SessionRecord, ServiceError> {
        self.lock().sessions.get(session_id).cloned().ok_or_else(|| ServiceError::UnknownSession(session_id.to_owned()))
    }

    /// Marks idle sessions abandoned; returns how many were.
    pub fn sweep_abandoned(&self) -> Result<usize, ServiceError> {
        let now = self.now();
        self.lock().sweep(now, self.config.abandon_after_hours)
    }

    pub fn responses(&self, filter: &ExportFilter) -> Vec<ResponseRow> {
        self.lock().responses.iter().filter(|r| filter.admits(r.role, r.part)).cloned().collect()
    }

    pub fn export_csv(&self, filter: &ExportFilter) -> Result<String, ServiceError> {
        Ok(export_csv(&self.responses(filter))?)
    }

    pub fn report(&self, filter: &ExportFilter) -> Result<ArmReport, ServiceError> {
        let g = self.lock();
        Ok(ArmReport::filtered(&g.responses, g.book.catalog(Part::One), g.book.catalog(Part::Two), filter)?)
    }

    pub fn snapshot(&self) -> BanditSnapshot {
        self.lock().book.snapshot()
    }

    pub fn pulls(&self) -> Vec<PullRecord> {
        self.lock().pulls.clone()
    }

    pub fn flush(&self) -> Result<(), ServiceError> {
        self.lock().store.flush()
    }

    pub fn metadata(&self) -> Metadata {
        let g = self.lock();
        let arms = Part::ALL
            .into_iter()
            .map(|p| (format!("part{}", p.number()), g.book.catalog(p).arms.iter().map(|a| a.id).collect()))
            .collect();
        Metadata {
            schema_version: API_SCHEMA_VERSION,
            service: "trustloop-survey".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            arms,
            n_patients: self.evidence.n_patients(),
            sessions: g.sessions.len(),
            pulls: g.book.n_records(),
            persistent: g.store.dir().is_some(),
        }
    }
}

impl Inner {
    fn new(book: BanditBook<f64>, store: Store) -> Self {
        Inner {
            book,
            sessions: HashMap::new(),
            last_active: BTreeMap::new(),
            responses: Vec::new(),
            pulls: Vec::new(),
            store,
            n_started: 0,
        }
    }

    fn arm<'a>(&'a self, part: Part, id: ArmId) -> Result<&'a trustloop::bandit::Arm, ServiceError> {
        Ok(self.book.catalog(part).arm(id)?)
    }

    fn start(&mut self, id: String, role: Role, a1: ArmId, a2: ArmId, ts: String, now: DateTime<Utc>) -> Result<(), ServiceError> {
        let rec = SessionRecord::new(id.clone(), role, self.arm(Part::One, a1)?, self.arm(Part::Two, a2)?, ts);
        self.sessions.insert(id.clone(), rec);
        self.last_active.insert(id, now);
        self.n_started += 1;
        Ok(())
    }

    /// Applies an accepted answer. With `log_pull` the pull is written to the
    /// pull log; during replay pulls come from the log instead.
    fn commit(&mut self, s: SessionRecord, outcome: Outcome, ts: &str, now: DateTime<Utc>, log_pull: bool) -> Result<Option<PullRecord>, ServiceError> {
        let pull = outcome.pull.map(|(part, reward)| PullRecord {
            timestamp: ts.to_owned(),
            part,
            role: s.role,
            arm_id: if part == Part::One { s.part1_arm } else { s.part2_arm },
            reward,
            session_id: s.session_id.clone(),
        });
        if s.status == SessionStatus::InProgress {
            self.last_active.insert(s.session_id.clone(), now);
        } else {
            self.last_active.remove(&s.session_id);
        }
        self.responses.extend(outcome.response);
        self.sessions.insert(s.session_id.clone(), s);
        if log_pull {
            if let Some(p) = &pull {
                self.store.append_pull(p)?;
                self.book.apply(p)?;
                self.pulls.push(p.clone());
                self.store.write_snapshot(&self.book.snapshot())?;
            }
        }
        Ok(pull)
    }

    fn sweep(&mut self, now: DateTime<Utc>, hours: i64) -> Result<usize, ServiceError> {
        let cutoff = now - Duration::hours(hours);
        let stale: Vec<String> = self.last_active.iter().filter(|(_, &t)| t < cutoff).map(|(id, _)| id.clone()).collect();
        let ts = stamp(now);
        for id in &stale {
            self.store.append_event(&SessionEvent::Abandoned { session_id: id.clone(), timestamp: ts.clone() })?;
            if let Some(s) = self.sessions.get_mut(id) {
                s.abandon(&ts);
            }
            self.last_active.remove(id);
        }
        Ok(stale.len())
    }

    /// Rebuilds sessions from the event log and the bandit from the pull log,
    /// appending any pull the events imply but the pull log lacks (a crash
    /// between the two writes).
    fn replay(&mut self, recovered: Recovered) -> Result<(), ServiceError> {
        let mut implied: Vec<PullRecord> = Vec::new();
        for ev in recovered.events {
            match ev {
                SessionEvent::Started { session_id, role, part1_arm, part2_arm, timestamp } => {
                    let t = parse_time(&timestamp)?;
                    self.start(session_id, role, part1_arm, part2_arm, timestamp, t)?;
                }
                SessionEvent::Answered { session_id, step_ref, kind, rating, timestamp } => {
                    let mut s = self
                        .sessions
                        .get(&session_id)
                        .cloned()
                        .ok_or_else(|| ServiceError::Storage(format!("answer for unknown session {session_id}")))?;
                    let outcome = s
                        .answer(step_ref, kind, rating, &timestamp)
                        .map_err(|e| ServiceError::Storage(format!("log replay of {session_id}: {e}")))?;
                    let t = parse_time(&timestamp)?;
                    implied.extend(self.commit(s, outcome, &timestamp, t, false)?);
                }
                SessionEvent::Abandoned { session_id, timestamp } => {
                    if let Some(s) = self.sessions.get_mut(&session_id) {
                        s.abandon(&timestamp);
                    }
                    self.last_active.remove(&session_id);
                }
            }
        }
        let key = |p: &PullRecord| (p.session_id.clone(), p.part);
        let logged: std::collections::HashSet<_> = recovered.pulls.iter().map(key).collect();
        let implied_keys: std::collections::HashSet<_> = implied.iter().map(key).collect();
        if let Some(p) = recovered.pulls.iter().find(|p| !implied_keys.contains(&key(p))) {
            return Err(ServiceError::Storage(format!(
                "pull log has a reward for session {} part {} that the session log does not support",
                p.session_id, p.part
            )));
        }
        for p in &recovered.pulls {
            self.book.apply(p)?;
        }
        self.pulls = recovered.pulls;
        for p in implied.into_iter().filter(|p| !logged.contains(&key(p))) {
            self.store.append_pull(&p)?;
            self.book.apply(&p)?;
            self.pulls.push(p);
        }
        Ok(())
    }
}

fn parse_time(s: &str) -> Result<DateTime<Utc>, ServiceError> {
    DateTime::parse_from_rfc3339(s)
        .map(|t| t.with_timezone(&Utc))
        .map_err(|e| ServiceError::Storage(format!("bad timestamp `{s}`: {e}")))
}
