mod common;

use std::sync::Arc;

use axum::http::{Method, StatusCode};
use chrono::Duration;
use common::*;
use promtrial_core::analytics::EventKind;
use promtrial_core::odm::parse_odm;
use promtrial_server::service::{Rejection, ServiceError};
use promtrial_server::wire::{event_xml, parse_assignments, parse_error};
use promtrial_server::ManualClock;

fn setup() -> (
    tempfile::TempDir,
    Arc<ManualClock>,
    Arc<promtrial_server::StudyService>,
) {
    let dir = tempfile::tempdir().unwrap();
    let clock = Arc::new(ManualClock::new(t0()));
    let svc = start(dir.path(), clock.clone());
    (dir, clock, svc)
}

fn kinds(svc: &promtrial_server::StudyService) -> Vec<EventKind> {
    svc.store()
        .read_events()
        .unwrap()
        .iter()
        .map(|e| e.kind)
        .collect()
}

#[tokio::test]
async fn login_issues_fresh_keys_and_logs_failures() {
    let (_d, _c, svc) = setup();
    let a = login(&svc, "p1").await;
    let b = login(&svc, "p1").await;
    assert_ne!(a, b);
    assert_eq!(a.len(), 32);
    assert!(a.chars().all(|c| c.is_ascii_hexdigit()));
    // both stay usable
    for k in [&a, &b] {
        let r = call(&svc, Method::GET, "/assignments", Some(k), "").await;
        assert_eq!(r.status, StatusCode::OK);
    }
    let bad = promtrial_server::wire::login_xml("p1", "nope", None);
    let r = call(&svc, Method::POST, "/auth/login", None, bad).await;
    assert_eq!(r.status, StatusCode::UNAUTHORIZED);
    assert_eq!(error_code(&r.body), "AuthFailed");
    let r = call(&svc, Method::POST, "/auth/login", None, "<Nope/>").await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);
    assert_eq!(
        kinds(&svc),
        [
            EventKind::LoginSuccess,
            EventKind::LoginSuccess,
            EventKind::LoginFailure
        ]
    );
}

#[tokio::test]
async fn session_window_boundaries() {
    let (_d, clock, svc) = setup();
    let k = login(&svc, "p1").await;
    clock.advance(Duration::minutes(29));
    assert_eq!(
        call(&svc, Method::GET, "/assignments", Some(&k), "")
            .await
            .status,
        StatusCode::OK
    );
    clock.advance(Duration::minutes(2));
    let r = call(&svc, Method::GET, "/assignments", Some(&k), "").await;
    assert_eq!(r.status, StatusCode::UNAUTHORIZED);
    assert_eq!(error_code(&r.body), "Expired");
    assert_eq!(kinds(&svc).last(), Some(&EventKind::SessionExpired));
    // a fresh login works again
    let k2 = login(&svc, "p1").await;
    assert_eq!(
        call(&svc, Method::GET, "/assignments", Some(&k2), "")
            .await
            .status,
        StatusCode::OK
    );
}

#[tokio::test]
async fn every_endpoint_answers_expired_keys_the_same_way() {
    let (_d, clock, svc) = setup();
    let k = login(&svc, "p1").await;
    clock.advance(Duration::minutes(45));
    let calls = [
        (Method::GET, "/assignments", Vec::new()),
        (Method::GET, "/assignments/A1/form", Vec::new()),
        (Method::POST, "/assignments/A1/submit", responses(&[])),
    ];
    for key in [Some(k.as_str()), Some("0123"), None] {
        for (m, uri, body) in &calls {
            let r = call(&svc, m.clone(), uri, key, body.clone()).await;
            assert_eq!(r.status, StatusCode::UNAUTHORIZED, "{uri}");
            assert_eq!(
                r.body.trim_end(),
                "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<Error code=\"Expired\"/>"
            );
        }
    }
    // only the first use of the known key is logged
    let expired = kinds(&svc)
        .iter()
        .filter(|k| **k == EventKind::SessionExpired)
        .count();
    assert_eq!(expired, 1);
}

#[tokio::test]
async fn assignment_lists_and_forms() {
    let (_d, _c, svc) = setup();
    let k1 = login(&svc, "p1").await;
    for id in ["A2", "A3"] {
        svc.submit(&k1, id, &responses(&[])).unwrap();
    }
    let r = call(&svc, Method::GET, "/assignments", Some(&k1), "").await;
    let (pending, completed) = parse_assignments(r.body.as_bytes()).unwrap();
    assert_eq!(pending, ["A1"]);
    assert_eq!(completed, ["A2", "A3"]);

    let k3 = login(&svc, "p3").await;
    let r = call(&svc, Method::GET, "/assignments", Some(&k3), "").await;
    assert_eq!(
        parse_assignments(r.body.as_bytes()).unwrap(),
        (vec![], vec![])
    );

    let r = call(&svc, Method::GET, "/assignments/A1/form", Some(&k1), "").await;
    assert_eq!(r.status, StatusCode::OK);
    let served = parse_odm(r.body.as_bytes()).unwrap();
    assert_eq!(served, gord().subset_for_form("F1").unwrap());
    assert_eq!(kinds(&svc).last(), Some(&EventKind::QuestionnaireOpened));

    let r = call(&svc, Method::GET, "/assignments/A2/form", Some(&k1), "").await;
    assert_eq!(
        (r.status, error_code(&r.body)),
        (StatusCode::CONFLICT, "NotPending".into())
    );
    let r = call(&svc, Method::GET, "/assignments/B1/form", Some(&k1), "").await;
    assert_eq!(
        (r.status, error_code(&r.body)),
        (StatusCode::FORBIDDEN, "NotOwner".into())
    );
    let r = call(&svc, Method::GET, "/assignments/Z9/form", Some(&k1), "").await;
    assert_eq!(
        (r.status, error_code(&r.body)),
        (StatusCode::NOT_FOUND, "NotFound".into())
    );
}

#[tokio::test]
async fn submit_lifecycle() {
    let (_d, _c, svc) = setup();
    let k = login(&svc, "p1").await;

    let r = call(
        &svc,
        Method::POST,
        "/assignments/A1/submit",
        Some(&k),
        responses(&["ID.ANEMIA"]),
    )
    .await;
    assert_eq!(r.status, StatusCode::UNPROCESSABLE_ENTITY);
    let (code, reason, items) = parse_error(r.body.as_bytes()).unwrap();
    assert_eq!(
        (code.as_str(), reason.as_deref()),
        ("Rejected", Some("IncompleteAnswers"))
    );
    assert_eq!(items, ["ID.ANEMIA"]);

    let bad =
        String::from_utf8(responses(&[]))
            .unwrap()
            .replacen("Value=\"2\"", "Value=\"two\"", 1);
    let r = call(&svc, Method::POST, "/assignments/A1/submit", Some(&k), bad).await;
    let (_, reason, items) = parse_error(r.body.as_bytes()).unwrap();
    assert_eq!(
        (reason.as_deref(), items),
        (Some("TypeError"), vec!["ID.HOUSEHOLD".to_owned()])
    );

    let r = call(
        &svc,
        Method::POST,
        "/assignments/A1/submit",
        Some(&k),
        "<ODM/>",
    )
    .await;
    assert_eq!(
        parse_error(r.body.as_bytes()).unwrap().1.as_deref(),
        Some("Malformed")
    );

    let r = call(
        &svc,
        Method::POST,
        "/assignments/A1/submit",
        Some(&k),
        responses(&[]),
    )
    .await;
    assert_eq!(r.status, StatusCode::OK, "{}", r.body);
    assert!(r.body.contains("<Accepted assignment=\"A1\""));

    let r = call(
        &svc,
        Method::POST,
        "/assignments/A1/submit",
        Some(&k),
        responses(&[]),
    )
    .await;
    assert_eq!(
        (r.status, error_code(&r.body)),
        (StatusCode::CONFLICT, "AlreadyCompleted".into())
    );

    let r = call(
        &svc,
        Method::POST,
        "/assignments/B1/submit",
        Some(&k),
        responses(&[]),
    )
    .await;
    assert_eq!(r.status, StatusCode::FORBIDDEN);
}

#[test]
fn concurrent_duplicate_submits_accept_once() {
    let (_d, _c, svc) = setup();
    let keys: Vec<String> = (0..4)
        .map(|_| svc.login("p1", &password("p1"), None).unwrap().key)
        .collect();
    let body = responses(&[]);
    let results: Vec<Result<_, ServiceError>> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..16)
            .map(|i| {
                let (svc, key, body) = (&svc, &keys[i % 4], &body);
                s.spawn(move || svc.submit(key, "A1", body))
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    assert_eq!(results.iter().filter(|r| r.is_ok()).count(), 1);
    assert!(results
        .iter()
        .filter_map(|r| r.as_ref().err())
        .all(|e| matches!(e, ServiceError::Rejected(Rejection::AlreadyCompleted))));
}

#[tokio::test]
async fn restart_keeps_completed_records_only() {
    let dir = tempfile::tempdir().unwrap();
    let clock = Arc::new(ManualClock::new(t0()));
    let svc = start(dir.path(), clock.clone());
    let k = login(&svc, "p1").await;
    svc.submit(&k, "A2", &responses(&[])).unwrap();
    drop(svc);

    let svc = start(dir.path(), clock);
    // sessions do not survive
    let r = call(&svc, Method::GET, "/assignments", Some(&k), "").await;
    assert_eq!(r.status, StatusCode::UNAUTHORIZED);
    let k = login(&svc, "p1").await;
    let r = call(&svc, Method::GET, "/assignments", Some(&k), "").await;
    let (pending, completed) = parse_assignments(r.body.as_bytes()).unwrap();
    assert_eq!(pending, ["A1", "A3"]);
    assert_eq!(completed, ["A2"]);
    assert!(r.body.contains("completed=\"2016-02-26T10:00:00.000Z\""));
}

#[tokio::test]
async fn events_are_acknowledged_and_logged() {
    let (_d, clock, svc) = setup();
    let k = login(&svc, "p1").await;
    let click = event_xml(EventKind::ButtonClick, None, None, &[("button", "NEXT")]);
    let r = call(&svc, Method::POST, "/events", Some(&k), click).await;
    assert_eq!(r.status, StatusCode::ACCEPTED);
    assert!(r.body.contains("<Ack/>"));

    // anonymous expiry report and junk are both acknowledged
    let expired = event_xml(EventKind::SessionExpired, Some(t0()), Some("visit-9"), &[]);
    assert_eq!(
        call(&svc, Method::POST, "/events", None, expired)
            .await
            .status,
        StatusCode::ACCEPTED
    );
    let junk =
        "<Events><Event kind=\"teleport\"/><Event kind=\"logout\" ts=\"yesterday\"/></Events>";
    assert_eq!(
        call(&svc, Method::POST, "/events", None, junk).await.status,
        StatusCode::ACCEPTED
    );
    assert_eq!(
        call(&svc, Method::POST, "/events", None, "not xml")
            .await
            .status,
        StatusCode::ACCEPTED
    );

    clock.advance(Duration::seconds(5));
    let batch = format!(
        "<Events>{}{}</Events>",
        event_xml(
            EventKind::ScreenShown,
            None,
            None,
            &[("screen", "IG.SMOKING")]
        ),
        event_xml(
            EventKind::AnswerCommitted,
            None,
            None,
            &[("item", "ID.SMOKER")]
        ),
    );
    call(&svc, Method::POST, "/events", Some(&k), batch).await;

    let log = svc.store().read_events().unwrap();
    let got: Vec<(EventKind, &str)> = log.iter().map(|e| (e.kind, e.session.as_str())).collect();
    let sid = promtrial_server::service::key_digest(&k);
    assert_eq!(
        got,
        [
            (EventKind::LoginSuccess, sid.as_str()),
            (EventKind::ButtonClick, sid.as_str()),
            (EventKind::SessionExpired, "visit-9"),
            (EventKind::ScreenShown, sid.as_str()),
            (EventKind::AnswerCommitted, sid.as_str()),
        ]
    );
    assert_eq!(log[1].button(), Some("NEXT"));
    assert_eq!(log[4].item(), Some("ID.SMOKER"));
    assert!(log.windows(2).skip(2).all(|w| w[0].ts <= w[1].ts));
    // keys never reach the log
    let raw = std::fs::read_to_string(svc.store().dir().join("events.ndjson")).unwrap();
    assert!(!raw.contains(&k));
}

#[tokio::test]
async fn logout_is_idempotent() {
    let (_d, clock, svc) = setup();
    let k = login(&svc, "p1").await;
    for _ in 0..2 {
        let r = call(&svc, Method::POST, "/auth/logout", Some(&k), "").await;
        assert_eq!(r.status, StatusCode::OK);
    }
    assert_eq!(
        call(&svc, Method::GET, "/assignments", Some(&k), "")
            .await
            .status,
        StatusCode::UNAUTHORIZED
    );
    let k2 = login(&svc, "p1").await;
    clock.advance(Duration::hours(1));
    assert_eq!(
        call(&svc, Method::POST, "/auth/logout", Some(&k2), "")
            .await
            .status,
        StatusCode::OK
    );
    assert_eq!(
        call(&svc, Method::POST, "/auth/logout", None, "")
            .await
            .status,
        StatusCode::OK
    );
    assert_eq!(
        kinds(&svc)
            .iter()
            .filter(|k| **k == EventKind::Logout)
            .count(),
        1
    );
}

#[test]
fn served_over_a_real_socket() {
    use std::io::{Read, Write};
    let (_d, _c, svc) = setup();
    let rt = tokio::runtime::Runtime::new().unwrap();
    let listener = rt
        .block_on(tokio::net::TcpListener::bind("127.0.0.1:0"))
        .unwrap();
    let addr = listener.local_addr().unwrap();
    rt.spawn(async move { axum::serve(listener, promtrial_server::router(svc)).await });
    let body = promtrial_server::wire::login_xml("p1", &password("p1"), None);
    let mut s = std::net::TcpStream::connect(addr).unwrap();
    write!(
        s,
        "POST /auth/login HTTP/1.1\r\nHost: x\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    )
    .unwrap();
    let mut out = String::new();
    s.read_to_string(&mut out).unwrap();
    assert!(out.starts_with("HTTP/1.1 200"), "{out}");
    assert!(out.contains("content-type: application/xml"));
    assert!(out.contains("<Session key=\""));
}
