//! XML request and response bodies.

use std::collections::BTreeMap;
use std::fmt::Write;

use chrono::{DateTime, Utc};
use promtrial_core::analytics::events::{BUTTON, ITEM, SCREEN};
use promtrial_core::analytics::{format_timestamp, parse_timestamp, EventKind};
use promtrial_core::xml::{self, escape, Element};

use crate::service::{Assignment, IncomingEvent, Rejection, ServiceError, Session};
use crate::store::SubmissionRecord;

pub const CONTENT_TYPE: &str = "application/xml; charset=utf-8";

const DECL: &str = "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoginRequest {
    pub username: String,
    pub password: String,
    pub log_id: Option<String>,
}

fn root(body: &[u8], name: &str) -> Result<Element, String> {
    let el = xml::parse(body).map_err(|e| e.to_string())?;
    if el.name != name {
        return Err(format!("expected <{name}>, found <{}>", el.name));
    }
    Ok(el)
}

pub fn parse_login(body: &[u8]) -> Result<LoginRequest, String> {
    let el = root(body, "Login")?;
    let get = |k: &str| el.attr(k).map(str::to_owned);
    Ok(LoginRequest {
        username: get("username").ok_or("Login/@username missing")?,
        password: get("password").ok_or("Login/@password missing")?,
        log_id: get("logId").filter(|s| !s.is_empty()),
    })
}

pub fn login_xml(username: &str, password: &str, log_id: Option<&str>) -> String {
    let mut out = format!(
        "<Login username=\"{}\" password=\"{}\"",
        escape(username),
        escape(password)
    );
    if let Some(id) = log_id {
        let _ = write!(out, " logId=\"{}\"", escape(id));
    }
    out.push_str("/>");
    out
}

pub fn session_xml(s: &Session) -> String {
    format!(
        "{DECL}<Session key=\"{}\" subject=\"{}\" issued=\"{}\" expires=\"{}\"/>\n",
        s.key,
        escape(&s.subject),
        format_timestamp(&s.issued_at),
        format_timestamp(&s.expires_at)
    )
}

fn assignment_line(out: &mut String, a: &Assignment) {
    let _ = write!(
        out,
        "    <Assignment id=\"{}\" form=\"{}\" name=\"{}\" status=\"{}\"",
        escape(&a.id),
        escape(&a.form_oid),
        escape(&a.form_name),
        a.status.as_str()
    );
    if let Some(t) = a.completed_at {
        let _ = write!(out, " completed=\"{}\"", format_timestamp(&t));
    }
    out.push_str("/>\n");
}

pub fn assignments_xml(pending: &[Assignment], completed: &[Assignment]) -> String {
    let mut out = format!("{DECL}<Assignments>\n");
    for (tag, list) in [("Pending", pending), ("Completed", completed)] {
        if list.is_empty() {
            let _ = writeln!(out, "  <{tag}/>");
            continue;
        }
        let _ = writeln!(out, "  <{tag}>");
        for a in list {
            assignment_line(&mut out, a);
        }
        let _ = writeln!(out, "  </{tag}>");
    }
    out.push_str("</Assignments>\n");
    out
}

/// Assignment ids and statuses from an `<Assignments>` document, as
/// `(pending, completed)`.
pub fn parse_assignments(body: &[u8]) -> Result<(Vec<String>, Vec<String>), String> {
    let el = root(body, "Assignments")?;
    let ids = |tag: &str| -> Vec<String> {
        el.child(tag)
            .map(|c| {
                c.children_named("Assignment")
                    .filter_map(|a| a.attr("id").map(str::to_owned))
                    .collect()
            })
            .unwrap_or_default()
    };
    Ok((ids("Pending"), ids("Completed")))
}

pub fn accepted_xml(rec: &SubmissionRecord) -> String {
    format!(
        "{DECL}<Accepted assignment=\"{}\" received=\"{}\"/>\n",
        escape(&rec.assignment_id),
        format_timestamp(&rec.received_at)
    )
}

pub fn ack_xml() -> String {
    format!("{DECL}<Ack/>\n")
}

/// Error body. Every failure has a `code`; rejections add a `reason` and,
/// where relevant, the offending items.
pub fn error_xml(err: &ServiceError) -> String {
    let mut out = String::from(DECL);
    let code = error_code(err);
    match err {
        ServiceError::Rejected(r) => {
            let _ = write!(out, "<Error code=\"{code}\" reason=\"{}\"", r.code());
            let items: Vec<(&str, Option<&str>)> = match r {
                Rejection::IncompleteAnswers(v) => v.iter().map(|i| (i.as_str(), None)).collect(),
                Rejection::Type { item, reason } => vec![(item, Some(reason.as_str()))],
                Rejection::UnknownItem(i) => vec![(i, None)],
                _ => vec![],
            };
            let message = match r {
                Rejection::Malformed(m) => Some(m.clone()),
                Rejection::WrongForm { expected, got } => {
                    Some(format!("expected form {expected}, got {got}"))
                }
                _ => None,
            };
            if let Some(m) = message {
                let _ = write!(out, " message=\"{}\"", escape(&m));
            }
            if items.is_empty() {
                out.push_str("/>\n");
            } else {
                out.push_str(">\n");
                for (oid, why) in items {
                    let _ = write!(out, "  <Item oid=\"{}\"", escape(oid));
                    if let Some(w) = why {
                        let _ = write!(out, " message=\"{}\"", escape(w));
                    }
                    out.push_str("/>\n");
                }
                out.push_str("</Error>\n");
            }
        }
        _ => {
            let _ = writeln!(out, "<Error code=\"{code}\"/>");
        }
    }
    out
}

pub fn error_code(err: &ServiceError) -> &'static str {
    match err {
        ServiceError::Expired => "Expired",
        ServiceError::AuthFailed => "AuthFailed",
        ServiceError::NotFound(_) => "NotFound",
        ServiceError::NotOwner => "NotOwner",
        ServiceError::NotPending => "NotPending",
        ServiceError::Rejected(Rejection::AlreadyCompleted) => "AlreadyCompleted",
        ServiceError::Rejected(_) => "Rejected",
        ServiceError::Storage(_) => "StorageError",
    }
}

pub fn bad_request_xml(message: &str) -> String {
    format!(
        "{DECL}<Error code=\"BadRequest\" message=\"{}\"/>\n",
        escape(message)
    )
}

/// An error body's `code`, `reason` and item oids.
pub fn parse_error(body: &[u8]) -> Result<(String, Option<String>, Vec<String>), String> {
    let el = root(body, "Error")?;
    Ok((
        el.attr("code").unwrap_or_default().to_owned(),
        el.attr("reason").map(str::to_owned),
        el.children_named("Item")
            .filter_map(|i| i.attr("oid").map(str::to_owned))
            .collect(),
    ))
}

fn parse_event(el: &Element) -> Result<IncomingEvent, String> {
    let kind: EventKind = el
        .attr("kind")
        .ok_or("Event/@kind missing")?
        .parse()
        .map_err(|e: promtrial_core::analytics::EventError| e.to_string())?;
    let ts = el
        .attr("ts")
        .map(parse_timestamp)
        .transpose()
        .map_err(|e| e.to_string())?;
    let mut payload = BTreeMap::new();
    for key in [SCREEN, ITEM, BUTTON] {
        if let Some(v) = el.attr(key) {
            payload.insert(key.to_owned(), v.to_owned());
        }
    }
    Ok(IncomingEvent {
        kind,
        ts,
        session: el.attr("session").map(str::to_owned),
        payload,
    })
}

/// Events from an `<Event>` or `<Events>` body. Each element is parsed on
/// its own so one bad event does not drop its neighbours.
pub fn parse_events(body: &[u8]) -> Result<Vec<Result<IncomingEvent, String>>, String> {
    let el = xml::parse(body).map_err(|e| e.to_string())?;
    match el.name.as_str() {
        "Event" => Ok(vec![parse_event(&el)]),
        "Events" => Ok(el.children_named("Event").map(parse_event).collect()),
        other => Err(format!("expected <Event> or <Events>, found <{other}>")),
    }
}

pub fn event_xml(
    kind: EventKind,
    ts: Option<DateTime<Utc>>,
    session: Option<&str>,
    payload: &[(&str, &str)],
) -> String {
    let mut out = format!("<Event kind=\"{}\"", kind.as_str());
    if let Some(t) = ts {
        let _ = write!(out, " ts=\"{}\"", format_timestamp(&t));
    }
    if let Some(s) = session {
        let _ = write!(out, " session=\"{}\"", escape(s));
    }
    for (k, v) in payload {
        let _ = write!(out, " {k}=\"{}\"", escape(v));
    }
    out.push_str("/>");
    out
}
