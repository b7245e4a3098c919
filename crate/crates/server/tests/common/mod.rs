//! Test harness: a gord study server on a manual clock and a temp directory.

#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use chrono::{DateTime, TimeZone, Utc};
use promtrial_core::form::{build_render_plan, serialize_responses, AnswerSet};
use promtrial_core::odm::{parse_odm, DataType, StudyDef};
use promtrial_server::config::{hash_password, AssignmentConfig, UserConfig};
use promtrial_server::store::Store;
use promtrial_server::{router, ManualClock, StudyService};
use tower::ServiceExt;

pub fn gord_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/gord.xml")
}

pub fn gord() -> StudyDef {
    parse_odm(&std::fs::read(gord_path()).unwrap()).unwrap()
}

pub fn t0() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2016, 2, 26, 10, 0, 0).unwrap()
}

pub fn user(name: &str, subject: &str) -> UserConfig {
    UserConfig {
        username: name.into(),
        subject: subject.into(),
        salt: format!("salt-{name}"),
        password_sha256: hash_password(&format!("salt-{name}"), &format!("pw-{name}")),
    }
}

pub fn password(name: &str) -> String {
    format!("pw-{name}")
}

/// p1 owns A1..A3, p2 owns B1, p3 owns nothing.
pub fn start(dir: &Path, clock: Arc<ManualClock>) -> Arc<StudyService> {
    let (store, existing) = Store::open(dir).unwrap();
    let assign = |id: &str, subject: &str| AssignmentConfig {
        id: id.into(),
        subject: subject.into(),
        form: "F1".into(),
    };
    let svc = StudyService::new(
        gord(),
        vec![
            user("p1", "P-001"),
            user("p2", "P-002"),
            user("p3", "P-003"),
        ],
        vec![
            assign("A1", "P-001"),
            assign("A2", "P-001"),
            assign("A3", "P-001"),
            assign("B1", "P-002"),
        ],
        30,
        clock,
        store,
        existing,
    )
    .unwrap();
    Arc::new(svc)
}

fn value_for(study: &StudyDef, oid: &str) -> String {
    let item = study.item(oid).unwrap();
    if let Some(cl) = study.code_list_of(item) {
        return cl.items.last().unwrap().coded_value.clone();
    }
    match item.data_type {
        DataType::Integer => "2".into(),
        DataType::Float => "1.5".into(),
        DataType::Date => "2016-02-26".into(),
        DataType::Text => "x".into(),
    }
}

/// A ClinicalData body answering every F1 question except `skip`.
pub fn responses(skip: &[&str]) -> Vec<u8> {
    let study = gord();
    let plan = build_render_plan(&study, "F1", "en").unwrap();
    let mut answers = AnswerSet::new();
    for q in plan.questions() {
        answers
            .commit(&q.item_oid, value_for(&study, &q.item_oid), t0())
            .unwrap();
    }
    let full =
        String::from_utf8(serialize_responses(&study, &plan, &answers, "P-001").unwrap()).unwrap();
    full.lines()
        .filter(|l| !skip.iter().any(|s| l.contains(&format!("ItemOID=\"{s}\""))))
        .collect::<Vec<_>>()
        .join("\n")
        .into_bytes()
}

pub struct Reply {
    pub status: StatusCode,
    pub body: String,
}

pub async fn call(
    svc: &Arc<StudyService>,
    method: Method,
    uri: &str,
    key: Option<&str>,
    body: impl Into<Body>,
) -> Reply {
    let mut req = Request::builder().method(method).uri(uri);
    if let Some(k) = key {
        req = req.header("X-Session-Key", k);
    }
    let resp = router(svc.clone())
        .oneshot(req.body(body.into()).unwrap())
        .await
        .unwrap();
    let status = resp.status();
    let bytes = axum::body::to_bytes(resp.into_body(), usize::MAX)
        .await
        .unwrap();
    Reply {
        status,
        body: String::from_utf8(bytes.to_vec()).unwrap(),
    }
}

/// Log in over HTTP and return the session key.
pub async fn login(svc: &Arc<StudyService>, name: &str) -> String {
    let body = promtrial_server::wire::login_xml(name, &password(name), None);
    let r = call(svc, Method::POST, "/auth/login", None, body).await;
    assert_eq!(r.status, StatusCode::OK, "{}", r.body);
    let el = promtrial_core::xml::parse(r.body.as_bytes()).unwrap();
    el.attr("key").unwrap().to_owned()
}

pub fn error_code(body: &str) -> String {
    promtrial_server::wire::parse_error(body.as_bytes())
        .unwrap()
        .0
}
