//! Protocol-independent study service: sessions, assignments, submissions and
//! event ingestion.

use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, Mutex, MutexGuard};

use chrono::{DateTime, Duration, Utc};
use log::{info, warn};
use promtrial_core::analytics::{EventKind, EventRecord};
use promtrial_core::form::{
    build_clinical_data, build_render_plan, parse_clinical_data, AnswerSet, SubmissionError,
};
use promtrial_core::odm::{parse_odm, write_odm, StudyDef};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::config::{AssignmentConfig, ServerConfig, UserConfig};
use crate::store::{Store, StoreError, SubmissionRecord};

pub trait Clock: Send + Sync {
    fn now(&self) -> DateTime<Utc>;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> DateTime<Utc> {
        Utc::now()
    }
}

/// A clock that only moves when told to.
#[derive(Debug)]
pub struct ManualClock(Mutex<DateTime<Utc>>);

impl ManualClock {
    pub fn new(t: DateTime<Utc>) -> Self {
        Self(Mutex::new(t))
    }

    pub fn set(&self, t: DateTime<Utc>) {
        *self.0.lock().unwrap() = t;
    }

    pub fn advance(&self, d: Duration) {
        *self.0.lock().unwrap() += d;
    }
}

impl Clock for ManualClock {
    fn now(&self) -> DateTime<Utc> {
        *self.0.lock().unwrap()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Session {
    pub key: String,
    pub subject: String,
    /// Session id written to the event log. Defaults to a digest of the key
    /// so raw keys never reach disk.
    pub log_id: String,
    pub issued_at: DateTime<Utc>,
    pub expires_at: DateTime<Utc>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Pending,
    Completed,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Pending => "pending",
            Status::Completed => "completed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assignment {
    pub id: String,
    pub subject: String,
    pub form_oid: String,
    pub form_name: String,
    pub status: Status,
    pub completed_at: Option<DateTime<Utc>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Rejection {
    Malformed(String),
    WrongForm { expected: String, got: String },
    IncompleteAnswers(Vec<String>),
    Type { item: String, reason: String },
    UnknownItem(String),
    AlreadyCompleted,
}

impl Rejection {
    pub fn code(&self) -> &'static str {
        match self {
            Rejection::Malformed(_) => "Malformed",
            Rejection::WrongForm { .. } => "WrongForm",
            Rejection::IncompleteAnswers(_) => "IncompleteAnswers",
            Rejection::Type { .. } => "TypeError",
            Rejection::UnknownItem(_) => "UnknownItem",
            Rejection::AlreadyCompleted => "AlreadyCompleted",
        }
    }
}

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("session expired")]
    Expired,
    #[error("wrong user name or password")]
    AuthFailed,
    #[error("no assignment {0}")]
    NotFound(String),
    #[error("assignment belongs to another subject")]
    NotOwner,
    #[error("assignment is not pending")]
    NotPending,
    #[error("submission rejected: {0:?}")]
    Rejected(Rejection),
    #[error(transparent)]
    Storage(#[from] StoreError),
}

#[derive(Debug, Error)]
pub enum SetupError {
    #[error("{path}: {source}")]
    Study {
        path: std::path::PathBuf,
        source: Box<dyn std::error::Error + Send + Sync>,
    },
    #[error("assignment {id} names unknown form {form}")]
    UnknownForm { id: String, form: String },
    #[error(transparent)]
    Store(#[from] StoreError),
}

/// An event as received from a client, before the server fills in defaults.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IncomingEvent {
    pub kind: EventKind,
    pub ts: Option<DateTime<Utc>>,
    pub session: Option<String>,
    pub payload: BTreeMap<String, String>,
}

pub fn key_digest(key: &str) -> String {
    hex::encode(&Sha256::digest(key.as_bytes())[..8])
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|e| e.into_inner())
}

pub struct StudyService {
    study: StudyDef,
    users: HashMap<String, UserConfig>,
    window: Duration,
    clock: Arc<dyn Clock>,
    sessions: Mutex<HashMap<String, Session>>,
    /// Held for the whole of a submit so state transitions are serialized.
    assignments: Mutex<BTreeMap<String, Assignment>>,
    store: Store,
}

impl StudyService {
    pub fn new(
        study: StudyDef,
        users: Vec<UserConfig>,
        assignments: Vec<AssignmentConfig>,
        session_minutes: i64,
        clock: Arc<dyn Clock>,
        store: Store,
        existing: Vec<SubmissionRecord>,
    ) -> Result<Self, SetupError> {
        let mut table = BTreeMap::new();
        for a in assignments {
            let form = study.form(&a.form).ok_or_else(|| SetupError::UnknownForm {
                id: a.id.clone(),
                form: a.form.clone(),
            })?;
            if !users.iter().any(|u| u.subject == a.subject) {
                warn!(
                    "assignment {} belongs to subject {} with no login",
                    a.id, a.subject
                );
            }
            table.insert(
                a.id.clone(),
                Assignment {
                    id: a.id,
                    subject: a.subject,
                    form_oid: form.oid.clone(),
                    form_name: form.name.clone(),
                    status: Status::Pending,
                    completed_at: None,
                },
            );
        }
        for rec in existing {
            match table.get_mut(&rec.assignment_id) {
                Some(a) => {
                    a.status = Status::Completed;
                    a.completed_at = Some(rec.received_at);
                }
                None => warn!(
                    "stored submission for unknown assignment {}",
                    rec.assignment_id
                ),
            }
        }
        Ok(Self {
            study,
            users: users.into_iter().map(|u| (u.username.clone(), u)).collect(),
            window: Duration::minutes(session_minutes),
            clock,
            sessions: Mutex::new(HashMap::new()),
            assignments: Mutex::new(table),
            store,
        })
    }

    pub fn from_config(cfg: &ServerConfig, clock: Arc<dyn Clock>) -> Result<Self, SetupError> {
        let study_err = |source: Box<dyn std::error::Error + Send + Sync>| SetupError::Study {
            path: cfg.study_file.clone(),
            source,
        };
        let bytes = std::fs::read(&cfg.study_file).map_err(|e| study_err(e.into()))?;
        let study = parse_odm(&bytes).map_err(|e| study_err(e.into()))?;
        let (store, existing) = Store::open(&cfg.data_dir)?;
        info!(
            "study {} loaded, {} stored submissions in {}",
            study.oid,
            existing.len(),
            cfg.data_dir.display()
        );
        Self::new(
            study,
            cfg.users.clone(),
            cfg.assignments.clone(),
            cfg.session_minutes,
            clock,
            store,
            existing,
        )
    }

    pub fn study(&self) -> &StudyDef {
        &self.study
    }

    pub fn store(&self) -> &Store {
        &self.store
    }

    pub fn now(&self) -> DateTime<Utc> {
        self.clock.now()
    }

    fn log(&self, session: &str, kind: EventKind) -> EventRecord {
        EventRecord::new(self.now(), session, kind)
    }

    fn append(&self, ev: &EventRecord) {
        if let Err(e) = self.store.append_event(ev) {
            warn!("event not recorded: {e}");
        }
    }

    pub fn login(
        &self,
        username: &str,
        password: &str,
        log_id: Option<&str>,
    ) -> Result<Session, ServiceError> {
        let user = match self.users.get(username) {
            Some(u) if u.check_password(password) => u,
            _ => {
                self.append(&self.log(log_id.unwrap_or("anonymous"), EventKind::LoginFailure));
                return Err(ServiceError::AuthFailed);
            }
        };
        let now = self.now();
        let mut sessions = lock(&self.sessions);
        let key = loop {
            let k = format!("{:032x}", rand::random::<u128>());
            if !sessions.contains_key(&k) {
                break k;
            }
        };
        let session = Session {
            log_id: log_id.map_or_else(|| key_digest(&key), str::to_owned),
            key: key.clone(),
            subject: user.subject.clone(),
            issued_at: now,
            expires_at: now + self.window,
        };
        sessions.insert(key, session.clone());
        drop(sessions);
        self.append(&self.log(&session.log_id, EventKind::LoginSuccess));
        Ok(session)
    }

    /// The live session for `key`. A key past its expiry is purged and a
    /// `session_expired` event recorded; unknown keys are simply expired.
    pub fn check_session(&self, key: &str) -> Result<Session, ServiceError> {
        let now = self.now();
        let mut sessions = lock(&self.sessions);
        match sessions.get(key) {
            Some(s) if now < s.expires_at => Ok(s.clone()),
            Some(_) => {
                let s = sessions.remove(key).expect("present");
                drop(sessions);
                self.append(&self.log(&s.log_id, EventKind::SessionExpired));
                Err(ServiceError::Expired)
            }
            None => Err(ServiceError::Expired),
        }
    }

    pub fn logout(&self, key: &str) {
        let removed = lock(&self.sessions).remove(key);
        if let Some(s) = removed {
            let kind = if self.now() < s.expires_at {
                EventKind::Logout
            } else {
                EventKind::SessionExpired
            };
            self.append(&self.log(&s.log_id, kind));
        }
    }

    /// Pending and completed assignments of the session's subject, by id.
    pub fn list_assignments(
        &self,
        key: &str,
    ) -> Result<(Vec<Assignment>, Vec<Assignment>), ServiceError> {
        let s = self.check_session(key)?;
        let table = lock(&self.assignments);
        Ok(table
            .values()
            .filter(|a| a.subject == s.subject)
            .cloned()
            .partition(|a| a.status == Status::Pending))
    }

    fn owned<'a>(
        table: &'a mut BTreeMap<String, Assignment>,
        s: &Session,
        id: &str,
    ) -> Result<&'a mut Assignment, ServiceError> {
        let a = table
            .get_mut(id)
            .ok_or_else(|| ServiceError::NotFound(id.to_owned()))?;
        if a.subject != s.subject {
            return Err(ServiceError::NotOwner);
        }
        Ok(a)
    }

    /// ODM metadata for a pending assignment's form.
    pub fn get_form(&self, key: &str, id: &str) -> Result<String, ServiceError> {
        let s = self.check_session(key)?;
        let form = {
            let mut table = lock(&self.assignments);
            let a = Self::owned(&mut table, &s, id)?;
            if a.status != Status::Pending {
                return Err(ServiceError::NotPending);
            }
            a.form_oid.clone()
        };
        let subset = self
            .study
            .subset_for_form(&form)
            .expect("assignment forms checked at startup");
        self.append(&self.log(&s.log_id, EventKind::QuestionnaireOpened));
        Ok(write_odm(&subset))
    }

    /// Validate and store a ClinicalData submission, completing the
    /// assignment. At most one submit per assignment can succeed.
    pub fn submit(
        &self,
        key: &str,
        id: &str,
        body: &[u8],
    ) -> Result<SubmissionRecord, ServiceError> {
        let s = self.check_session(key)?;
        let reject = |r| Err(ServiceError::Rejected(r));
        let mut table = lock(&self.assignments);
        let a = Self::owned(&mut table, &s, id)?;
        if a.status == Status::Completed {
            return reject(Rejection::AlreadyCompleted);
        }
        let doc = match parse_clinical_data(body) {
            Ok(d) => d,
            Err(e) => return reject(Rejection::Malformed(e.to_string())),
        };
        if doc.form_oid != a.form_oid {
            return reject(Rejection::WrongForm {
                expected: a.form_oid.clone(),
                got: doc.form_oid,
            });
        }
        let now = self.now();
        let mut answers = AnswerSet::new();
        for d in doc.item_data() {
            if answers.get(&d.item_oid).is_some() {
                return reject(Rejection::Malformed(format!(
                    "item {} answered twice",
                    d.item_oid
                )));
            }
            answers
                .commit(&d.item_oid, &d.value, now)
                .expect("single timestamp");
        }
        let plan = build_render_plan(&self.study, &a.form_oid, "en")
            .expect("assignment forms checked at startup");
        let clean = match build_clinical_data(&self.study, &plan, &answers, &s.subject) {
            Ok(c) => c,
            Err(SubmissionError::IncompleteAnswers(items)) => {
                return reject(Rejection::IncompleteAnswers(items))
            }
            Err(SubmissionError::Type(e)) => {
                return reject(Rejection::Type {
                    item: e.item_oid,
                    reason: e.reason,
                })
            }
            Err(SubmissionError::UnknownItem(item)) => return reject(Rejection::UnknownItem(item)),
        };
        let rec = SubmissionRecord {
            assignment_id: a.id.clone(),
            subject: s.subject.clone(),
            received_at: now,
            clinical_data: String::from_utf8(clean.to_xml()).expect("writer emits UTF-8"),
        };
        self.store.append_submission(&rec)?;
        a.status = Status::Completed;
        a.completed_at = Some(now);
        Ok(rec)
    }

    /// Append a client event. Never fails: storage errors are logged.
    pub fn record_event(&self, key: Option<&str>, ev: IncomingEvent) {
        let session = ev.session.unwrap_or_else(|| match key {
            Some(k) => lock(&self.sessions)
                .get(k)
                .map_or_else(|| key_digest(k), |s| s.log_id.clone()),
            None => "anonymous".to_owned(),
        });
        let mut rec = EventRecord::new(ev.ts.unwrap_or_else(|| self.now()), session, ev.kind);
        rec.payload = ev.payload;
        self.append(&rec);
    }
}
