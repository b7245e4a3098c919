use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;
use thiserror::Error;

use super::stages::{StageLayout, UserTimings};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GroupError {
    #[error("group {0} has no users")]
    EmptyGroup(String),
    #[error("user {user} is in unknown group {group}")]
    UnknownGroup { user: String, group: String },
    #[error("user {0} has no group assignment")]
    Ungrouped(String),
    #[error("user {user} has stages {got:?}, expected {expected:?}")]
    StageMismatch {
        user: String,
        expected: Vec<String>,
        got: Vec<String>,
    },
    #[error("table shape mismatch: {0}")]
    Shape(String),
}

/// One row of a group table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupRow {
    pub stage: String,
    /// Mean per group, in group order.
    pub means: Vec<f64>,
    /// Mean over all users (group means weighted by group size).
    pub overall: f64,
    /// Later group over earlier group, in [`ratio_pairs`] order.
    pub ratios: Vec<f64>,
}

/// Per-stage group means with pairwise ratios and a total row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupTable {
    pub groups: Vec<String>,
    pub sizes: Vec<usize>,
    pub rows: Vec<GroupRow>,
    /// Column sums of the stage means. Ratios here are quotients of totals.
    pub total: GroupRow,
}

/// Pairs `(later, earlier)`: for three groups, B/A, C/A, C/B.
pub fn ratio_pairs(n: usize) -> Vec<(usize, usize)> {
    (1..n).flat_map(|j| (0..j).map(move |i| (j, i))).collect()
}

fn make_row(stage: String, means: Vec<f64>, sizes: &[usize]) -> GroupRow {
    let n: usize = sizes.iter().sum();
    let overall = means
        .iter()
        .zip(sizes)
        .map(|(m, &s)| m * s as f64)
        .sum::<f64>()
        / n as f64;
    let ratios = ratio_pairs(means.len())
        .into_iter()
        .map(|(j, i)| means[j] / means[i])
        .collect();
    GroupRow {
        stage,
        means,
        overall,
        ratios,
    }
}

impl GroupTable {
    /// Build a table from already-averaged values. `means[g][s]` is the mean of
    /// group `g` at stage `s`.
    pub fn from_means(
        groups: &[(&str, usize)],
        stages: &[&str],
        means: &[Vec<f64>],
    ) -> Result<Self, GroupError> {
        if means.len() != groups.len() {
            return Err(GroupError::Shape(format!(
                "{} groups but {} mean columns",
                groups.len(),
                means.len()
            )));
        }
        for ((name, size), col) in groups.iter().zip(means) {
            if *size == 0 {
                return Err(GroupError::EmptyGroup((*name).to_owned()));
            }
            if col.len() != stages.len() {
                return Err(GroupError::Shape(format!(
                    "group {name} has {} values for {} stages",
                    col.len(),
                    stages.len()
                )));
            }
        }
        let sizes: Vec<usize> = groups.iter().map(|g| g.1).collect();
        let rows: Vec<GroupRow> = stages
            .iter()
            .enumerate()
            .map(|(s, stage)| {
                make_row(
                    (*stage).to_owned(),
                    means.iter().map(|c| c[s]).collect(),
                    &sizes,
                )
            })
            .collect();
        let totals = means.iter().map(|c| c.iter().sum()).collect();
        Ok(Self {
            groups: groups.iter().map(|g| g.0.to_owned()).collect(),
            total: make_row("Total".to_owned(), totals, &sizes),
            sizes,
            rows,
        })
    }

    pub fn ratio_labels(&self) -> Vec<String> {
        ratio_pairs(self.groups.len())
            .into_iter()
            .map(|(j, i)| format!("{}/{}", self.groups[j], self.groups[i]))
            .collect()
    }

    pub fn row(&self, stage: &str) -> Option<&GroupRow> {
        self.rows.iter().find(|r| r.stage == stage)
    }

    fn header(&self) -> Vec<String> {
        let mut h = vec!["stage".to_owned()];
        h.extend(self.groups.iter().cloned());
        h.push("all".to_owned());
        h.extend(self.ratio_labels());
        h
    }

    fn cells(row: &GroupRow) -> Vec<String> {
        let mut c = vec![row.stage.clone()];
        c.extend(row.means.iter().map(|v| format!("{v:.2}")));
        c.push(format!("{:.2}", row.overall));
        c.extend(row.ratios.iter().map(|v| format!("{v:.2}")));
        c
    }

    /// Aligned plain-text table, values to two decimals.
    pub fn to_text(&self) -> String {
        let mut lines: Vec<Vec<String>> = vec![self.header()];
        lines.extend(self.rows.iter().map(Self::cells));
        lines.push(Self::cells(&self.total));
        let widths: Vec<usize> = (0..lines[0].len())
            .map(|c| lines.iter().map(|l| l[c].len()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for l in &lines {
            let mut line = String::new();
            for (c, cell) in l.iter().enumerate() {
                if c == 0 {
                    let _ = write!(line, "{cell:<w$}", w = widths[0]);
                } else {
                    let _ = write!(line, "  {cell:>w$}", w = widths[c]);
                }
            }
            out.push_str(line.trim_end());
            out.push('\n');
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut wtr = csv::Writer::from_writer(Vec::new());
        let _ = wtr.write_record(self.header());
        for row in self.rows.iter().chain(std::iter::once(&self.total)) {
            let mut c = vec![row.stage.clone()];
            c.extend(row.means.iter().map(|v| format!("{v:.4}")));
            c.push(format!("{:.4}", row.overall));
            c.extend(row.ratios.iter().map(|v| format!("{v:.4}")));
            let _ = wtr.write_record(c);
        }
        String::from_utf8(wtr.into_inner().unwrap_or_default()).unwrap_or_default()
    }
}

/// Average per-user stage timings by group. `order` fixes the group column
/// order; every user must belong to one of those groups and share the stage
/// list of the first user.
pub fn aggregate_groups(
    timings: &UserTimings,
    group_of: &BTreeMap<String, String>,
    order: &[String],
) -> Result<GroupTable, GroupError> {
    let stages: Vec<String> = timings
        .values()
        .next()
        .map(|t| t.iter().map(|s| s.stage.clone()).collect())
        .unwrap_or_default();
    let mut sums = vec![vec![0.0; stages.len()]; order.len()];
    let mut sizes = vec![0usize; order.len()];
    for (user, list) in timings {
        let group = group_of
            .get(user)
            .ok_or_else(|| GroupError::Ungrouped(user.clone()))?;
        let g = order
            .iter()
            .position(|o| o == group)
            .ok_or_else(|| GroupError::UnknownGroup {
                user: user.clone(),
                group: group.clone(),
            })?;
        let got: Vec<&str> = list.iter().map(|s| s.stage.as_str()).collect();
        if got != stages {
            return Err(GroupError::StageMismatch {
                user: user.clone(),
                expected: stages.clone(),
                got: got.into_iter().map(str::to_owned).collect(),
            });
        }
        for (acc, t) in sums[g].iter_mut().zip(list) {
            *acc += t.seconds;
        }
        sizes[g] += 1;
    }
    if let Some(g) = sizes.iter().position(|&s| s == 0) {
        return Err(GroupError::EmptyGroup(order[g].clone()));
    }
    let means: Vec<Vec<f64>> = sums
        .into_iter()
        .zip(&sizes)
        .map(|(col, &n)| col.into_iter().map(|v| v / n as f64).collect())
        .collect();
    let groups: Vec<(&str, usize)> = order.iter().map(String::as_str).zip(sizes).collect();
    let stage_refs: Vec<&str> = stages.iter().map(String::as_str).collect();
    GroupTable::from_means(&groups, &stage_refs, &means)
}

/// Question-time aggregates for one section.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SectionStats {
    pub section: String,
    pub questions: usize,
    /// Summed question means per group (section load stage excluded).
    pub sums: Vec<f64>,
    pub per_question: Vec<f64>,
    pub overall_sum: f64,
    pub overall_per_question: f64,
    /// Per-question ratios in [`ratio_pairs`] order.
    pub ratios: Vec<f64>,
}

/// Per-section sums of the question stages in `layout`. Questions missing
/// from the table are skipped.
pub fn section_stats(table: &GroupTable, layout: &StageLayout) -> Vec<SectionStats> {
    let ng = table.groups.len();
    layout
        .sections
        .iter()
        .map(|section| {
            let rows: Vec<&GroupRow> = section
                .questions
                .iter()
                .filter_map(|q| table.row(&q.label))
                .collect();
            let count = rows.len();
            let sums: Vec<f64> = (0..ng)
                .map(|g| rows.iter().map(|r| r.means[g]).sum())
                .collect();
            let summary = make_row(section.label.clone(), sums.clone(), &table.sizes);
            let per_q = |v: f64| if count == 0 { 0.0 } else { v / count as f64 };
            SectionStats {
                section: section.label.clone(),
                questions: count,
                per_question: sums.iter().map(|&v| per_q(v)).collect(),
                sums,
                overall_sum: summary.overall,
                overall_per_question: per_q(summary.overall),
                ratios: summary.ratios,
            }
        })
        .collect()
}
