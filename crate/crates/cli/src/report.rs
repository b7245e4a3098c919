use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::Args;
use promtrial_core::analytics::{
    aggregate_groups, read_timings_csv, section_stats, GroupTable, StageLayout, UserTimings,
};

use crate::{Format, Result};

#[derive(Args)]
pub struct TableArgs {
    /// A timings CSV (`user,stage,seconds`) or a directory of them.
    timings: PathBuf,
    /// CSV mapping `user,group`.
    #[arg(long)]
    groups: PathBuf,
    /// Group column order; defaults to first appearance in the groups file.
    #[arg(long, value_delimiter = ',')]
    order: Option<Vec<String>>,
    #[arg(long, value_enum, default_value_t)]
    format: Format,
}

#[derive(Args)]
pub struct MeansArgs {
    /// CSV with a stage column and one column of means per group. A row
    /// whose first field is `total` is skipped.
    means: PathBuf,
    /// Columns holding the group means, in table order.
    #[arg(long, value_delimiter = ',', required = true)]
    columns: Vec<String>,
    /// Group sizes, same order as --columns.
    #[arg(long, value_delimiter = ',', required = true)]
    sizes: Vec<usize>,
    /// Column naming each row's stage.
    #[arg(long, default_value = "stage")]
    stage_column: String,
    /// Display names; defaults to the column names.
    #[arg(long, value_delimiter = ',')]
    names: Option<Vec<String>>,
    #[arg(long, value_enum, default_value_t)]
    format: Format,
}

fn load_timings(path: &Path) -> Result<UserTimings> {
    let mut files = Vec::new();
    if path.is_dir() {
        for entry in fs::read_dir(path)? {
            let p = entry?.path();
            if p.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
                files.push(p);
            }
        }
        files.sort();
    } else {
        files.push(path.to_owned());
    }
    let mut all = UserTimings::new();
    for f in files {
        let file = fs::File::open(&f).map_err(|e| format!("{}: {e}", f.display()))?;
        for (user, t) in read_timings_csv(file).map_err(|e| format!("{}: {e}", f.display()))? {
            if all.insert(user.clone(), t).is_some() {
                return Err(format!("{}: user {user} appears twice", f.display()).into());
            }
        }
    }
    Ok(all)
}

fn load_groups(path: &Path) -> Result<(BTreeMap<String, String>, Vec<String>)> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| format!("{}: {e}", path.display()))?;
    let mut map = BTreeMap::new();
    let mut order = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let (Some(user), Some(group)) = (row.get(0), row.get(1)) else {
            return Err(format!("{}: expected user,group rows", path.display()).into());
        };
        if !order.iter().any(|g| g == group) {
            order.push(group.to_owned());
        }
        map.insert(user.to_owned(), group.to_owned());
    }
    Ok((map, order))
}

/// The from-sizes layout whose section and question labels match `labels`,
/// if any. The login and logout rows may be named freely.
fn layout_for(labels: &[&str]) -> Option<StageLayout> {
    let mut sizes = Vec::new();
    for l in labels {
        if l.starts_with('S') {
            sizes.push(0);
        } else if l.starts_with('Q') {
            *sizes.last_mut()? += 1;
        }
    }
    let layout = StageLayout::from_sizes(&sizes);
    let want = layout.stage_labels();
    let n = want.len();
    (labels.len() == n && n >= 2 && want[1..n - 1] == labels[1..n - 1]).then_some(layout)
}

fn print_table(table: &GroupTable, format: Format) {
    match format {
        Format::Csv => print!("{}", table.to_csv()),
        Format::Text => {
            print!("{}", table.to_text());
            let labels: Vec<&str> = table.rows.iter().map(|r| r.stage.as_str()).collect();
            if let Some(layout) = layout_for(&labels) {
                println!();
                println!("section  questions  sums  per-question  all  ratios");
                for s in section_stats(table, &layout) {
                    let f = |v: &[f64]| {
                        v.iter()
                            .map(|x| format!("{x:.2}"))
                            .collect::<Vec<_>>()
                            .join("/")
                    };
                    println!(
                        "{}  {}  {}  {}  {:.2}/{:.2}  {}",
                        s.section,
                        s.questions,
                        f(&s.sums),
                        f(&s.per_question),
                        s.overall_sum,
                        s.overall_per_question,
                        f(&s.ratios)
                    );
                }
            }
        }
    }
}

pub fn table(a: TableArgs) -> Result<ExitCode> {
    let timings = load_timings(&a.timings)?;
    let (groups, seen) = load_groups(&a.groups)?;
    let order = a.order.unwrap_or(seen);
    let table = aggregate_groups(&timings, &groups, &order)?;
    print_table(&table, a.format);
    Ok(ExitCode::SUCCESS)
}

pub fn means(a: MeansArgs) -> Result<ExitCode> {
    if a.columns.len() != a.sizes.len() {
        return Err("--columns and --sizes differ in length".into());
    }
    let names = a.names.unwrap_or_else(|| a.columns.clone());
    if names.len() != a.columns.len() {
        return Err("--names and --columns differ in length".into());
    }
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(&a.means)
        .map_err(|e| format!("{}: {e}", a.means.display()))?;
    let headers = rdr.headers()?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| format!("{}: no column {name:?}", a.means.display()))
    };
    let stage_col = find(&a.stage_column)?;
    let cols: Vec<usize> = a
        .columns
        .iter()
        .map(|c| find(c))
        .collect::<std::result::Result<_, _>>()?;
    let mut stages = Vec::new();
    let mut means = vec![Vec::new(); cols.len()];
    for row in rdr.records() {
        let row = row?;
        let stage = row.get(stage_col).unwrap_or_default();
        if stage.eq_ignore_ascii_case("total")
            || row.get(0).is_some_and(|v| v.eq_ignore_ascii_case("total"))
        {
            continue;
        }
        stages.push(stage.to_owned());
        for (g, &c) in cols.iter().enumerate() {
            let raw = row.get(c).unwrap_or_default();
            means[g].push(
                raw.parse::<f64>()
                    .map_err(|_| format!("stage {stage}: {raw:?} is not a number"))?,
            );
        }
    }
    let groups: Vec<(&str, usize)> = names
        .iter()
        .map(String::as_str)
        .zip(a.sizes.iter().copied())
        .collect();
    let stage_refs: Vec<&str> = stages.iter().map(String::as_str).collect();
    let table = GroupTable::from_means(&groups, &stage_refs, &means)?;
    print_table(&table, a.format);
    Ok(ExitCode::SUCCESS)
}
