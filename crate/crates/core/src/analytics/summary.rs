use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use super::events::{by_session, EventKind, EventRecord};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EfficiencyError {
    #[error("time must be positive and finite, got {0}")]
    ZeroTime(f64),
    #[error("effectiveness must lie in [0, 1], got {0}")]
    Effectiveness(f64),
}

/// Effectiveness achieved per second spent.
pub fn efficiency(effectiveness: f64, seconds: f64) -> Result<f64, EfficiencyError> {
    if !(seconds.is_finite() && seconds > 0.0) {
        return Err(EfficiencyError::ZeroTime(seconds));
    }
    if !(0.0..=1.0).contains(&effectiveness) {
        return Err(EfficiencyError::Effectiveness(effectiveness));
    }
    Ok(effectiveness / seconds)
}

/// Usage counters over a log.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct EventSummary {
    pub sessions: usize,
    pub login_success: u64,
    pub login_failure: u64,
    pub logout: u64,
    pub session_expired: u64,
    pub questionnaire_opened: u64,
    pub questionnaire_abandoned: u64,
    pub incomplete_answer_alerts: u64,
    pub answers_committed: u64,
    pub screens_shown: u64,
    pub button_clicks: BTreeMap<String, u64>,
    /// Seconds per screen id, from each showing to the next screen or
    /// session-ending event in the same session.
    pub screen_seconds: BTreeMap<String, f64>,
}

fn ends_screen(kind: EventKind) -> bool {
    matches!(
        kind,
        EventKind::ScreenShown
            | EventKind::Logout
            | EventKind::QuestionnaireAbandoned
            | EventKind::SessionExpired
    )
}

pub fn event_summary(events: &[EventRecord]) -> EventSummary {
    let mut s = EventSummary::default();
    let sessions = by_session(events);
    s.sessions = sessions.len();
    for list in sessions.values() {
        for (i, ev) in list.iter().enumerate() {
            match ev.kind {
                EventKind::LoginSuccess => s.login_success += 1,
                EventKind::LoginFailure => s.login_failure += 1,
                EventKind::Logout => s.logout += 1,
                EventKind::SessionExpired => s.session_expired += 1,
                EventKind::QuestionnaireOpened => s.questionnaire_opened += 1,
                EventKind::QuestionnaireAbandoned => s.questionnaire_abandoned += 1,
                EventKind::IncompleteAnswerAlert => s.incomplete_answer_alerts += 1,
                EventKind::AnswerCommitted => s.answers_committed += 1,
                EventKind::ButtonClick => {
                    let b = ev.button().unwrap_or("?").to_owned();
                    *s.button_clicks.entry(b).or_default() += 1;
                }
                EventKind::ScreenShown => {
                    s.screens_shown += 1;
                    let screen = ev.screen().unwrap_or("?").to_owned();
                    let end = list[i + 1..].iter().find(|e| ends_screen(e.kind));
                    if let Some(end) = end {
                        let secs = (end.ts - ev.ts).num_milliseconds() as f64 / 1000.0;
                        *s.screen_seconds.entry(screen).or_default() += secs;
                    }
                }
            }
        }
    }
    s
}

impl EventSummary {
    /// `key value` lines, stable order.
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "sessions {}\nlogin_success {}\nlogin_failure {}\nlogout {}\nsession_expired {}\n\
             questionnaire_opened {}\nquestionnaire_abandoned {}\nincomplete_answer_alerts {}\n\
             answers_committed {}\nscreens_shown {}\n",
            self.sessions,
            self.login_success,
            self.login_failure,
            self.logout,
            self.session_expired,
            self.questionnaire_opened,
            self.questionnaire_abandoned,
            self.incomplete_answer_alerts,
            self.answers_committed,
            self.screens_shown,
        );
        for (b, n) in &self.button_clicks {
            out.push_str(&format!("button_click[{b}] {n}\n"));
        }
        for (screen, secs) in &self.screen_seconds {
            out.push_str(&format!("screen_seconds[{screen}] {secs:.3}\n"));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytics::events::{parse_timestamp, BUTTON, SCREEN};

    fn ev(ts: &str, session: &str, kind: EventKind) -> EventRecord {
        EventRecord::new(parse_timestamp(ts).unwrap(), session, kind)
    }

    #[test]
    fn efficiency_values() {
        assert!((efficiency(1.0, 149.81).unwrap() - 0.006675).abs() < 1e-6);
        assert_eq!(efficiency(0.0, 12.0).unwrap(), 0.0);
        assert_eq!(efficiency(0.5, 100.0).unwrap(), 0.005);
        assert_eq!(efficiency(1.0, 0.0), Err(EfficiencyError::ZeroTime(0.0)));
        assert!(efficiency(1.5, 1.0).is_err());
    }

    #[test]
    fn empty_summary() {
        let s = event_summary(&[]);
        assert_eq!(s, EventSummary::default());
    }

    #[test]
    fn counts() {
        let mut log = vec![
            ev("2016-02-26T10:00:00.000Z", "a", EventKind::LoginFailure),
            ev("2016-02-26T10:00:01.000Z", "a", EventKind::LoginSuccess),
            ev(
                "2016-02-26T10:00:02.000Z",
                "a",
                EventKind::QuestionnaireOpened,
            ),
            ev("2016-02-26T10:00:02.000Z", "a", EventKind::ScreenShown).with(SCREEN, "S1"),
            ev("2016-02-26T10:00:05.500Z", "a", EventKind::ScreenShown).with(SCREEN, "S2"),
            ev(
                "2016-02-26T10:00:07.000Z",
                "a",
                EventKind::QuestionnaireAbandoned,
            ),
            ev("2016-02-26T10:00:03.000Z", "b", EventKind::SessionExpired),
        ];
        for t in ["01", "02", "03"] {
            log.push(
                ev(
                    &format!("2016-02-26T10:00:{t}.100Z"),
                    "a",
                    EventKind::ButtonClick,
                )
                .with(BUTTON, "NEXT"),
            );
        }
        let s = event_summary(&log);
        assert_eq!(s.sessions, 2);
        assert_eq!(s.login_failure, 1);
        assert_eq!(s.login_success, 1);
        assert_eq!(s.questionnaire_opened, 1);
        assert_eq!(s.questionnaire_abandoned, 1);
        assert_eq!(s.session_expired, 1);
        assert_eq!(s.button_clicks["NEXT"], 3);
        assert_eq!(s.screen_seconds["S1"], 3.5);
        assert_eq!(s.screen_seconds["S2"], 1.5);
        assert!(s.to_text().contains("button_click[NEXT] 3\n"));
    }
}
