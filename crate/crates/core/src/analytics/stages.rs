use std::collections::BTreeMap;
use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::events::{by_session, EventKind, EventRecord};
use crate::form::RenderPlan;

/// Where a question stage starts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Anchor {
    /// From the moment its section's screen was shown.
    SectionShown,
    /// From the previous question's answer; for the first question of the
    /// form this falls back to the section screen.
    PreviousAnswer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionSlot {
    pub label: String,
    pub item: String,
    pub anchor: Anchor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectionSlot {
    pub label: String,
    pub screen: String,
    pub questions: Vec<QuestionSlot>,
}

/// Maps log events onto stages: Login, then per section a load stage followed
/// by its question stages, then Logout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageLayout {
    pub login_screen: String,
    pub sections: Vec<SectionSlot>,
}

pub const LOGIN: &str = "Login";
pub const LOGOUT: &str = "Logout";
pub const DEFAULT_LOGIN_SCREEN: &str = "login";

impl StageLayout {
    /// Build a layout from section sizes. Sections are labelled S1.., questions
    /// Q1.. numbered across the whole form, and screen/item ids equal the
    /// labels. The first question of each section is timed from its screen.
    pub fn from_sizes(sizes: &[usize]) -> Self {
        let mut n = 0;
        let sections = sizes
            .iter()
            .enumerate()
            .map(|(s, &count)| SectionSlot {
                label: format!("S{}", s + 1),
                screen: format!("S{}", s + 1),
                questions: (0..count)
                    .map(|i| {
                        n += 1;
                        QuestionSlot {
                            label: format!("Q{n}"),
                            item: format!("Q{n}"),
                            anchor: if i == 0 {
                                Anchor::SectionShown
                            } else {
                                Anchor::PreviousAnswer
                            },
                        }
                    })
                    .collect(),
            })
            .collect();
        Self {
            login_screen: DEFAULT_LOGIN_SCREEN.to_owned(),
            sections,
        }
    }

    /// The five-section, fifteen-question reflux questionnaire layout.
    pub fn reflux() -> Self {
        Self::from_sizes(&[3, 2, 1, 6, 3])
    }

    /// Layout for logs produced while filling `plan`: screen ids are item
    /// group OIDs and item ids are item OIDs, labels are S1.. and Q1...
    pub fn from_plan(plan: &RenderPlan) -> Self {
        let sizes: Vec<usize> = plan.screens.iter().map(|s| s.questions.len()).collect();
        let mut layout = Self::from_sizes(&sizes);
        for (slot, screen) in layout.sections.iter_mut().zip(&plan.screens) {
            slot.screen = screen.group_oid.clone();
            for (q, view) in slot.questions.iter_mut().zip(&screen.questions) {
                q.item = view.item_oid.clone();
            }
        }
        layout
    }

    /// Time exactly the listed question labels from their section screen and
    /// every other question from the previous answer.
    pub fn with_section_anchors(mut self, labels: &[&str]) -> Self {
        for q in self
            .sections
            .iter_mut()
            .flat_map(|s| s.questions.iter_mut())
        {
            q.anchor = if labels.contains(&q.label.as_str()) {
                Anchor::SectionShown
            } else {
                Anchor::PreviousAnswer
            };
        }
        self
    }

    pub fn stage_labels(&self) -> Vec<String> {
        let mut out = vec![LOGIN.to_owned()];
        for s in &self.sections {
            out.push(s.label.clone());
            out.extend(s.questions.iter().map(|q| q.label.clone()));
        }
        out.push(LOGOUT.to_owned());
        out
    }

    pub fn stage_count(&self) -> usize {
        2 + self
            .sections
            .iter()
            .map(|s| 1 + s.questions.len())
            .sum::<usize>()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub struct IncompleteSession {
    pub missing: Vec<String>,
    pub partial: Vec<StageTiming>,
}

impl fmt::Display for IncompleteSession {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "incomplete session, missing stages: {}",
            self.missing.join(", ")
        )
    }
}

fn seconds(from: DateTime<Utc>, to: DateTime<Utc>) -> f64 {
    (to - from).num_milliseconds() as f64 / 1000.0
}

fn first_of<'a>(
    events: &[&'a EventRecord],
    kind: EventKind,
    pred: impl Fn(&EventRecord) -> bool,
) -> Option<&'a EventRecord> {
    events.iter().copied().find(|e| e.kind == kind && pred(e))
}

/// Split one session's events into stage durations.
///
/// Stage ends are clamped to be no earlier than the previous stage end, so
/// durations are never negative and, for a complete session, they sum to the
/// time from the login screen to logout.
pub fn segment_stages(
    events: &[EventRecord],
    layout: &StageLayout,
) -> Result<Vec<StageTiming>, IncompleteSession> {
    let mut evs: Vec<&EventRecord> = events.iter().collect();
    evs.sort_by_key(|e| e.ts);

    let login_screen = first_of(&evs, EventKind::ScreenShown, |e| {
        e.screen() == Some(layout.login_screen.as_str())
    })
    .map(|e| e.ts);
    let after_login = |e: &EventRecord| login_screen.is_none_or(|t| e.ts >= t);
    let login_ok = first_of(&evs, EventKind::LoginSuccess, after_login).map(|e| e.ts);
    let logout = first_of(&evs, EventKind::Logout, after_login).map(|e| e.ts);

    let shown: Vec<Option<DateTime<Utc>>> = layout
        .sections
        .iter()
        .map(|s| {
            first_of(&evs, EventKind::ScreenShown, |e| {
                e.screen() == Some(s.screen.as_str())
            })
            .map(|e| e.ts)
        })
        .collect();

    let mut timings = Vec::with_capacity(layout.stage_count());
    let mut missing = Vec::new();
    let mut last: Option<DateTime<Utc>> = None;
    let mut prev_answer: Option<DateTime<Utc>> = None;

    let mut stage = |label: &str,
                     start: Option<DateTime<Utc>>,
                     end: Option<DateTime<Utc>>,
                     last: &mut Option<DateTime<Utc>>|
     -> Option<DateTime<Utc>> {
        let end = end.map(|t| last.map_or(t, |l| t.max(l)));
        match (start, end) {
            (Some(s), Some(e)) => timings.push(StageTiming {
                stage: label.to_owned(),
                seconds: seconds(s, e).max(0.0),
            }),
            _ => missing.push(label.to_owned()),
        }
        if end.is_some() {
            *last = end;
        }
        end
    };

    stage(LOGIN, login_screen, login_ok, &mut last);

    for (k, section) in layout.sections.iter().enumerate() {
        let section_start = last;
        let shown_at = stage(&section.label, section_start, shown[k], &mut last);

        // answers for this section count up to the next section's screen
        let boundary = shown[k + 1..].iter().flatten().next().copied().or(logout);
        for q in &section.questions {
            let answered = evs
                .iter()
                .filter(|e| {
                    e.kind == EventKind::AnswerCommitted
                        && e.item() == Some(q.item.as_str())
                        && boundary.is_none_or(|b| e.ts <= b)
                })
                .map(|e| e.ts)
                .next_back();
            let start = match q.anchor {
                Anchor::SectionShown => shown_at,
                Anchor::PreviousAnswer => prev_answer.or(shown_at),
            };
            let end = stage(&q.label, start, answered, &mut last);
            if end.is_some() {
                prev_answer = end;
            }
        }
    }

    stage(LOGOUT, last, logout, &mut last);

    if missing.is_empty() {
        Ok(timings)
    } else {
        Err(IncompleteSession {
            missing,
            partial: timings,
        })
    }
}

/// Segment every session in a mixed log.
pub fn segment_sessions(
    events: &[EventRecord],
    layout: &StageLayout,
) -> BTreeMap<String, Result<Vec<StageTiming>, IncompleteSession>> {
    by_session(events)
        .into_iter()
        .map(|(session, evs)| {
            let res = segment_stages(&evs, layout);
            (session, res)
        })
        .collect()
}

/// Per-user timings, keyed by user id, each in stage order.
pub type UserTimings = BTreeMap<String, Vec<StageTiming>>;

/// Write timings in long form: `user,stage,seconds`.
pub fn write_timings_csv<W: std::io::Write>(w: W, timings: &UserTimings) -> csv::Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["user", "stage", "seconds"])?;
    for (user, list) in timings {
        for t in list {
            wtr.write_record([
                user.as_str(),
                t.stage.as_str(),
                &format!("{:.3}", t.seconds),
            ])?;
        }
    }
    wtr.flush()?;
    Ok(())
}

#[derive(Debug, Error)]
pub enum TimingsError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("row {row}: bad seconds value {value:?}")]
    Seconds { row: usize, value: String },
}

/// Read long-form timings (`user,stage,seconds`). Stage order per user is
/// the row order.
pub fn read_timings_csv<R: std::io::Read>(r: R) -> Result<UserTimings, TimingsError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(r);
    let mut out = UserTimings::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        let value = row.get(2).unwrap_or_default();
        let seconds: f64 = value.parse().map_err(|_| TimingsError::Seconds {
            row: i + 2,
            value: value.to_owned(),
        })?;
        out.entry(row.get(0).unwrap_or_default().to_owned())
            .or_default()
            .push(StageTiming {
                stage: row.get(1).unwrap_or_default().to_owned(),
                seconds,
            });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytics::events::{ITEM, SCREEN};
    use chrono::TimeZone;

    fn at(ms: i64) -> DateTime<Utc> {
        Utc.timestamp_millis_opt(1_456_480_800_000 + ms).unwrap()
    }

    fn shown(ms: i64, screen: &str) -> EventRecord {
        EventRecord::new(at(ms), "s", EventKind::ScreenShown).with(SCREEN, screen)
    }

    fn answer(ms: i64, item: &str) -> EventRecord {
        EventRecord::new(at(ms), "s", EventKind::AnswerCommitted).with(ITEM, item)
    }

    fn two_section_log() -> Vec<EventRecord> {
        vec![
            shown(0, "login"),
            EventRecord::new(at(21_010), "s", EventKind::LoginSuccess),
            shown(32_610, "S1"),
            answer(41_450, "Q1"),
            answer(52_710, "Q2"),
            shown(60_000, "S2"),
            answer(61_000, "Q3"),
            EventRecord::new(at(70_000), "s", EventKind::Logout),
        ]
    }

    #[test]
    fn labels_for_reflux() {
        let l = StageLayout::reflux();
        let labels = l.stage_labels();
        assert_eq!(labels.len(), 22);
        assert_eq!(l.stage_count(), 22);
        assert_eq!(&labels[..4], ["Login", "S1", "Q1", "Q2"]);
        assert_eq!(labels[8], "S3");
        assert_eq!(labels[21], "Logout");
        let firsts: Vec<_> = l
            .sections
            .iter()
            .map(|s| s.questions[0].label.as_str())
            .collect();
        assert_eq!(firsts, ["Q1", "Q4", "Q6", "Q7", "Q13"]);
    }

    #[test]
    fn complete_session() {
        let layout = StageLayout::from_sizes(&[2, 1]);
        let t = segment_stages(&two_section_log(), &layout).unwrap();
        let got: Vec<(&str, f64)> = t.iter().map(|s| (s.stage.as_str(), s.seconds)).collect();
        assert_eq!(
            got,
            [
                ("Login", 21.01),
                ("S1", 11.6),
                ("Q1", 8.84),
                ("Q2", 11.26),
                ("S2", 7.29),
                ("Q3", 1.0),
                ("Logout", 9.0),
            ]
        );
        let total: f64 = t.iter().map(|s| s.seconds).sum();
        assert!((total - 70.0).abs() < 1e-9);
    }

    #[test]
    fn missing_logout() {
        let layout = StageLayout::from_sizes(&[2, 1]);
        let mut log = two_section_log();
        log.pop();
        let err = segment_stages(&log, &layout).unwrap_err();
        assert_eq!(err.missing, ["Logout"]);
        assert_eq!(err.partial.len(), 6);
    }

    #[test]
    fn missing_answer_keeps_later_stages() {
        let layout = StageLayout::from_sizes(&[2, 1]);
        let log: Vec<_> = two_section_log()
            .into_iter()
            .filter(|e| e.item() != Some("Q1"))
            .collect();
        let err = segment_stages(&log, &layout).unwrap_err();
        assert_eq!(err.missing, ["Q1"]);
        let q2 = err.partial.iter().find(|t| t.stage == "Q2").unwrap();
        assert!((q2.seconds - 20.1).abs() < 1e-9);
    }

    #[test]
    fn reanswer_uses_last_commit_in_section() {
        let layout = StageLayout::from_sizes(&[2, 1]);
        let mut log = two_section_log();
        log.push(answer(45_000, "Q1"));
        // a late commit after the next screen does not count
        log.push(answer(65_000, "Q2"));
        let t = segment_stages(&log, &layout).unwrap();
        assert!((t[2].seconds - 12.39).abs() < 1e-9);
        assert!((t[3].seconds - 7.71).abs() < 1e-9);
    }

    #[test]
    fn out_of_order_answers_clamp_to_zero() {
        let layout = StageLayout::from_sizes(&[2]);
        let log = vec![
            shown(0, "login"),
            EventRecord::new(at(1000), "s", EventKind::LoginSuccess),
            shown(2000, "S1"),
            answer(5000, "Q2"),
            answer(4000, "Q1"),
            EventRecord::new(at(6000), "s", EventKind::Logout),
        ];
        // Q1 answered at 4 s, Q2 at 5 s: ordinary
        let t = segment_stages(&log, &layout).unwrap();
        assert_eq!(t[3].seconds, 1.0);
        let log2 = vec![
            shown(0, "login"),
            EventRecord::new(at(1000), "s", EventKind::LoginSuccess),
            shown(2000, "S1"),
            answer(5000, "Q1"),
            answer(4000, "Q2"),
            EventRecord::new(at(6000), "s", EventKind::Logout),
        ];
        let t = segment_stages(&log2, &layout).unwrap();
        assert_eq!(t[3].seconds, 0.0);
        let total: f64 = t.iter().map(|s| s.seconds).sum();
        assert_eq!(total, 6.0);
    }

    #[test]
    fn section_anchor_overrides() {
        let layout = StageLayout::from_sizes(&[2, 1]).with_section_anchors(&["Q1", "Q2"]);
        let t = segment_stages(&two_section_log(), &layout).unwrap();
        // Q2 now runs from the S1 screen
        assert!((t[3].seconds - 20.1).abs() < 1e-9);
        // Q3 runs from the previous answer, absorbing the S2 load
        assert!((t[5].seconds - 8.29).abs() < 1e-9);
    }

    #[test]
    fn timings_csv_round_trip() {
        let layout = StageLayout::from_sizes(&[2, 1]);
        let mut all = UserTimings::new();
        all.insert(
            "u1".into(),
            segment_stages(&two_section_log(), &layout).unwrap(),
        );
        let mut buf = Vec::new();
        write_timings_csv(&mut buf, &all).unwrap();
        let back = read_timings_csv(buf.as_slice()).unwrap();
        assert_eq!(back, all);
    }
}
