//! axum routes over [`StudyService`].

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use log::warn;

use crate::service::{Rejection, ServiceError, StudyService};
use crate::wire;

pub const SESSION_HEADER: &str = "x-session-key";

fn xml(status: StatusCode, body: String) -> Response {
    (status, [(header::CONTENT_TYPE, wire::CONTENT_TYPE)], body).into_response()
}

pub fn status_of(err: &ServiceError) -> StatusCode {
    match err {
        ServiceError::Expired | ServiceError::AuthFailed => StatusCode::UNAUTHORIZED,
        ServiceError::NotOwner => StatusCode::FORBIDDEN,
        ServiceError::NotFound(_) => StatusCode::NOT_FOUND,
        ServiceError::NotPending | ServiceError::Rejected(Rejection::AlreadyCompleted) => {
            StatusCode::CONFLICT
        }
        ServiceError::Rejected(_) => StatusCode::UNPROCESSABLE_ENTITY,
        ServiceError::Storage(_) => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

fn failure(err: ServiceError) -> Response {
    if let ServiceError::Storage(e) = &err {
        warn!("storage failure: {e}");
    }
    xml(status_of(&err), wire::error_xml(&err))
}

fn key(headers: &HeaderMap) -> Option<&str> {
    headers.get(SESSION_HEADER).and_then(|v| v.to_str().ok())
}

/// A missing key is answered exactly like an expired one.
fn require_key(headers: &HeaderMap) -> Result<&str, Response> {
    key(headers).ok_or_else(|| failure(ServiceError::Expired))
}

async fn login(State(svc): State<Arc<StudyService>>, body: Bytes) -> Response {
    let req = match wire::parse_login(&body) {
        Ok(r) => r,
        Err(m) => return xml(StatusCode::BAD_REQUEST, wire::bad_request_xml(&m)),
    };
    match svc.login(&req.username, &req.password, req.log_id.as_deref()) {
        Ok(s) => xml(StatusCode::OK, wire::session_xml(&s)),
        Err(e) => failure(e),
    }
}

async fn logout(State(svc): State<Arc<StudyService>>, headers: HeaderMap) -> Response {
    if let Some(k) = key(&headers) {
        svc.logout(k);
    }
    xml(StatusCode::OK, wire::ack_xml())
}

async fn assignments(State(svc): State<Arc<StudyService>>, headers: HeaderMap) -> Response {
    let k = match require_key(&headers) {
        Ok(k) => k,
        Err(r) => return r,
    };
    match svc.list_assignments(k) {
        Ok((p, c)) => xml(StatusCode::OK, wire::assignments_xml(&p, &c)),
        Err(e) => failure(e),
    }
}

async fn form(
    State(svc): State<Arc<StudyService>>,
    headers: HeaderMap,
    Path(id): Path<String>,
) -> Response {
    let k = match require_key(&headers) {
        Ok(k) => k,
        Err(r) => return r,
    };
    match svc.get_form(k, &id) {
        Ok(odm) => xml(StatusCode::OK, odm),
        Err(e) => failure(e),
    }
}

async fn submit(
    State(svc): State<Arc<StudyService>>,
    headers: HeaderMap,
    Path(id): Path<String>,
    body: Bytes,
) -> Response {
    let k = match require_key(&headers) {
        Ok(k) => k,
        Err(r) => return r,
    };
    match svc.submit(k, &id, &body) {
        Ok(rec) => xml(StatusCode::OK, wire::accepted_xml(&rec)),
        Err(e) => failure(e),
    }
}

async fn events(State(svc): State<Arc<StudyService>>, headers: HeaderMap, body: Bytes) -> Response {
    match wire::parse_events(&body) {
        Ok(list) => {
            for ev in list {
                match ev {
                    Ok(ev) => svc.record_event(key(&headers), ev),
                    Err(m) => warn!("dropped event: {m}"),
                }
            }
        }
        Err(m) => warn!("dropped event body: {m}"),
    }
    xml(StatusCode::ACCEPTED, wire::ack_xml())
}

pub fn router(svc: Arc<StudyService>) -> Router {
    Router::new()
        .route("/auth/login", post(login))
        .route("/auth/logout", post(logout))
        .route("/assignments", get(assignments))
        .route("/assignments/{id}/form", get(form))
        .route("/assignments/{id}/submit", post(submit))
        .route("/events", post(events))
        .with_state(svc)
}
