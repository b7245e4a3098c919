use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    ScreenShown,
    AnswerCommitted,
    ButtonClick,
    LoginSuccess,
    LoginFailure,
    Logout,
    QuestionnaireOpened,
    QuestionnaireAbandoned,
    IncompleteAnswerAlert,
    SessionExpired,
}

impl EventKind {
    pub const ALL: [EventKind; 10] = [
        EventKind::ScreenShown,
        EventKind::AnswerCommitted,
        EventKind::ButtonClick,
        EventKind::LoginSuccess,
        EventKind::LoginFailure,
        EventKind::Logout,
        EventKind::QuestionnaireOpened,
        EventKind::QuestionnaireAbandoned,
        EventKind::IncompleteAnswerAlert,
        EventKind::SessionExpired,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::ScreenShown => "screen_shown",
            EventKind::AnswerCommitted => "answer_committed",
            EventKind::ButtonClick => "button_click",
            EventKind::LoginSuccess => "login_success",
            EventKind::LoginFailure => "login_failure",
            EventKind::Logout => "logout",
            EventKind::QuestionnaireOpened => "questionnaire_opened",
            EventKind::QuestionnaireAbandoned => "questionnaire_abandoned",
            EventKind::IncompleteAnswerAlert => "incomplete_answer_alert",
            EventKind::SessionExpired => "session_expired",
        }
    }
}

impl FromStr for EventKind {
    type Err = EventError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        EventKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| EventError::UnknownKind(s.to_owned()))
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Payload keys used by the analytics: which screen, item or button an event
/// is about.
pub const SCREEN: &str = "screen";
pub const ITEM: &str = "item";
pub const BUTTON: &str = "button";

mod ts_millis {
    use chrono::{DateTime, SecondsFormat, Utc};
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(ts: &DateTime<Utc>, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&ts.to_rfc3339_opts(SecondsFormat::Millis, true))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DateTime<Utc>, D::Error> {
        let raw = String::deserialize(d)?;
        super::parse_timestamp(&raw).map_err(serde::de::Error::custom)
    }
}

/// One usage-log entry.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventRecord {
    #[serde(with = "ts_millis")]
    pub ts: DateTime<Utc>,
    pub session: String,
    pub kind: EventKind,
    #[serde(default)]
    pub payload: BTreeMap<String, String>,
}

impl EventRecord {
    pub fn new(ts: DateTime<Utc>, session: impl Into<String>, kind: EventKind) -> Self {
        Self {
            ts,
            session: session.into(),
            kind,
            payload: BTreeMap::new(),
        }
    }

    pub fn with(mut self, key: &str, value: impl Into<String>) -> Self {
        self.payload.insert(key.to_owned(), value.into());
        self
    }

    pub fn screen(&self) -> Option<&str> {
        self.payload.get(SCREEN).map(String::as_str)
    }

    pub fn item(&self) -> Option<&str> {
        self.payload.get(ITEM).map(String::as_str)
    }

    pub fn button(&self) -> Option<&str> {
        self.payload.get(BUTTON).map(String::as_str)
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("event records always serialize")
    }
}

#[derive(Debug, Error)]
pub enum EventError {
    #[error("unknown event kind {0:?}")]
    UnknownKind(String),
    #[error("bad timestamp {0:?}")]
    Timestamp(String),
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// RFC 3339 timestamp, truncated to millisecond precision.
pub fn parse_timestamp(raw: &str) -> Result<DateTime<Utc>, EventError> {
    let ts = DateTime::parse_from_rfc3339(raw.trim())
        .map_err(|_| EventError::Timestamp(raw.to_owned()))?
        .with_timezone(&Utc);
    let ms = ts.timestamp_millis();
    DateTime::from_timestamp_millis(ms).ok_or_else(|| EventError::Timestamp(raw.to_owned()))
}

pub fn format_timestamp(ts: &DateTime<Utc>) -> String {
    ts.to_rfc3339_opts(SecondsFormat::Millis, true)
}

/// A log read leniently: well-formed records plus a note per skipped line.
#[derive(Debug, Default)]
pub struct EventLog {
    pub events: Vec<EventRecord>,
    pub skipped: Vec<String>,
}

/// Read newline-delimited JSON records. Blank lines are ignored; lines that
/// fail to parse (including a torn final line) are skipped and reported.
pub fn read_ndjson<R: BufRead>(reader: R) -> Result<EventLog, EventError> {
    let mut log = EventLog::default();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<EventRecord>(&line) {
            Ok(ev) => log.events.push(ev),
            Err(e) => {
                let note = format!("line {}: {e}", n + 1);
                log::warn!("skipping event {note}");
                log.skipped.push(note);
            }
        }
    }
    Ok(log)
}

pub fn write_ndjson<W: Write>(mut w: W, events: &[EventRecord]) -> std::io::Result<()> {
    for ev in events {
        writeln!(w, "{}", ev.to_json_line())?;
    }
    Ok(())
}

/// Read the CSV import format: `ts,session,kind,payload` with a header row and
/// the payload as `key=value` pairs separated by `;`.
pub fn read_csv<R: std::io::Read>(reader: R) -> Result<Vec<EventRecord>, EventError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut out = Vec::new();
    for (n, row) in rdr.records().enumerate() {
        let line = n + 2;
        let row = row.map_err(|e| EventError::Line {
            line,
            message: e.to_string(),
        })?;
        let field = |i: usize| row.get(i).unwrap_or_default();
        let mut ev = EventRecord::new(
            parse_timestamp(field(0)).map_err(|e| EventError::Line {
                line,
                message: e.to_string(),
            })?,
            field(1),
            field(2).parse().map_err(|e: EventError| EventError::Line {
                line,
                message: e.to_string(),
            })?,
        );
        for pair in field(3).split(';').filter(|p| !p.trim().is_empty()) {
            let (k, v) = pair.split_once('=').ok_or_else(|| EventError::Line {
                line,
                message: format!("payload entry {pair:?} is not key=value"),
            })?;
            ev.payload.insert(k.trim().to_owned(), v.trim().to_owned());
        }
        out.push(ev);
    }
    Ok(out)
}

/// Split events by session, each list sorted by timestamp (stable, so
/// same-millisecond events keep their log order).
pub fn by_session(events: &[EventRecord]) -> BTreeMap<String, Vec<EventRecord>> {
    let mut out: BTreeMap<String, Vec<EventRecord>> = BTreeMap::new();
    for ev in events {
        out.entry(ev.session.clone()).or_default().push(ev.clone());
    }
    for list in out.values_mut() {
        list.sort_by_key(|e| e.ts);
    }
    out
}
