use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::Args;
use promtrial_core::analytics::{
    event_summary, mann_whitney, read_csv, read_ndjson, segment_sessions, write_timings_csv,
    EventRecord, MwuError, MwuOptions, MwuResult, StageLayout, UserTimings,
};
use promtrial_core::form::build_render_plan;
use promtrial_core::gaze::{
    aoi_metrics, detect_fixations, extract_saccades, fixations_csv, heatmap, metrics_csv,
    read_aoi_file, read_samples_csv, saccades_csv, IdtConfig,
};
use promtrial_core::odm::parse_odm;

use crate::{read, Format, MwuArgs, Result};

#[derive(Args)]
pub struct StagesArgs {
    /// Event log, NDJSON or (with a .csv extension) the CSV import format.
    events: PathBuf,
    /// Questions per section; screen and item ids are S1.. and Q1...
    #[arg(long, value_delimiter = ',', conflicts_with = "study")]
    sizes: Option<Vec<usize>>,
    /// Take the layout from a form: screens are item group OIDs, items are
    /// item OIDs.
    #[arg(long, requires = "form")]
    study: Option<PathBuf>,
    #[arg(long)]
    form: Option<String>,
    /// Question labels timed from their section screen; all others run from
    /// the previous answer. Defaults to the first question of each section.
    #[arg(long, value_delimiter = ',')]
    anchors: Option<Vec<String>>,
    #[arg(long, default_value = promtrial_core::analytics::stages::DEFAULT_LOGIN_SCREEN)]
    login_screen: String,
    /// Print event counters instead of stage timings.
    #[arg(long)]
    summary: bool,
}

pub fn read_events(path: &Path) -> Result<Vec<EventRecord>> {
    let file = fs::File::open(path).map_err(|e| format!("{}: {e}", path.display()))?;
    if path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"))
    {
        return Ok(read_csv(file)?);
    }
    let log = read_ndjson(BufReader::new(file))?;
    if !log.skipped.is_empty() {
        eprintln!(
            "{}: skipped {} malformed lines",
            path.display(),
            log.skipped.len()
        );
    }
    Ok(log.events)
}

fn layout(a: &StagesArgs) -> Result<StageLayout> {
    let mut layout = match (&a.study, &a.sizes) {
        (Some(study), _) => {
            let study = parse_odm(&read(study)?)?;
            let form = a.form.as_deref().expect("clap enforces --form");
            StageLayout::from_plan(&build_render_plan(&study, form, "en")?)
        }
        (None, Some(sizes)) => StageLayout::from_sizes(sizes),
        (None, None) => StageLayout::reflux(),
    };
    if let Some(anchors) = &a.anchors {
        let labels: Vec<&str> = anchors.iter().map(String::as_str).collect();
        layout = layout.with_section_anchors(&labels);
    }
    layout.login_screen = a.login_screen.clone();
    Ok(layout)
}

pub fn stages(a: StagesArgs) -> Result<ExitCode> {
    let events = read_events(&a.events)?;
    if a.summary {
        print!("{}", event_summary(&events).to_text());
        return Ok(ExitCode::SUCCESS);
    }
    let layout = layout(&a)?;
    let mut timings = UserTimings::new();
    for (session, res) in segment_sessions(&events, &layout) {
        match res {
            Ok(t) => {
                timings.insert(session, t);
            }
            Err(e) => eprintln!("session {session}: {e}"),
        }
    }
    write_timings_csv(std::io::stdout().lock(), &timings)?;
    Ok(ExitCode::SUCCESS)
}

/// Values from the `seconds` column, or the last column when there is none.
pub fn read_sample(path: &Path) -> Result<Vec<f64>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| format!("{}: {e}", path.display()))?;
    let headers = rdr.headers()?.clone();
    let col = headers
        .iter()
        .position(|h| h.eq_ignore_ascii_case("seconds"))
        .unwrap_or(headers.len().saturating_sub(1));
    let mut out = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        let raw = row.get(col).unwrap_or_default();
        let v: f64 = raw
            .parse()
            .map_err(|_| format!("{} line {}: {raw:?} is not a number", path.display(), i + 2))?;
        out.push(v);
    }
    Ok(out)
}

pub fn mwu(a: MwuArgs) -> Result<ExitCode> {
    let x = read_sample(&a.group_a)?;
    let y = read_sample(&a.group_b)?;
    let opts = MwuOptions {
        continuity: !a.no_continuity,
        tie_correction: a.tie_correction,
    };
    let res: MwuResult = match mann_whitney(&x, &y, opts) {
        Ok(r) => r,
        Err(MwuError::DegenerateVariance(r)) => {
            eprintln!("all values tied; reporting p=1");
            r
        }
        Err(e) => return Err(e.into()),
    };
    match a.format {
        Format::Text => println!("{}", res.to_text()),
        Format::Csv => println!("{}\n{}", MwuResult::CSV_HEADER, res.to_csv_row()),
    }
    Ok(ExitCode::SUCCESS)
}

fn parse_pair(raw: &str) -> std::result::Result<(f64, f64), String> {
    let (a, b) = raw
        .split_once('x')
        .ok_or_else(|| format!("{raw:?}: expected WxH"))?;
    let a: f64 = a.parse().map_err(|_| format!("{raw:?}: bad width"))?;
    let b: f64 = b.parse().map_err(|_| format!("{raw:?}: bad height"))?;
    if a <= 0.0 || b <= 0.0 {
        return Err(format!("{raw:?}: both sides must be positive"));
    }
    Ok((a, b))
}

#[derive(Args)]
pub struct GazeArgs {
    /// Samples as CSV with header `t,x,y,valid`.
    samples: PathBuf,
    /// AOI file, one `id x y w h t_start t_end` per line.
    #[arg(long)]
    aoi: Option<PathBuf>,
    #[arg(long, default_value_t = 50.0)]
    dispersion: f64,
    #[arg(long, default_value_t = 0.15)]
    min_dur: f64,
    #[arg(long, default_value_t = 1.5)]
    max_dur: f64,
    /// Write fixations, saccades, metrics and heatmap files here.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Heatmap cells, COLSxROWS.
    #[arg(long, default_value = "32x18", value_parser = parse_pair)]
    grid: (f64, f64),
    /// Screen size in pixels, WIDTHxHEIGHT.
    #[arg(long, default_value = "1920x1080", value_parser = parse_pair)]
    screen: (f64, f64),
}

pub fn gaze(a: GazeArgs) -> Result<ExitCode> {
    let file = fs::File::open(&a.samples).map_err(|e| format!("{}: {e}", a.samples.display()))?;
    let samples = read_samples_csv(file)?;
    let cfg = IdtConfig {
        dispersion_px: a.dispersion,
        min_dur: a.min_dur,
        max_dur: a.max_dur,
    };
    let fixations = detect_fixations(&samples, &cfg);
    let saccades = extract_saccades(&fixations);
    let aois = match &a.aoi {
        Some(p) => read_aoi_file(&String::from_utf8(read(p)?)?)?,
        None => Vec::new(),
    };
    let rows: Vec<(String, _)> = aois
        .iter()
        .map(|x| (x.id.clone(), aoi_metrics(&fixations, x)))
        .collect();
    eprintln!(
        "{} samples, {} fixations, {} saccades",
        samples.len(),
        fixations.len(),
        saccades.len()
    );
    print!("{}", metrics_csv(&rows));
    if let Some(dir) = &a.out_dir {
        fs::create_dir_all(dir)?;
        let (cols, rows_n) = (a.grid.0 as usize, a.grid.1 as usize);
        let hm = heatmap(
            &fixations,
            cols.max(1),
            rows_n.max(1),
            a.screen.0,
            a.screen.1,
        );
        fs::write(dir.join("fixations.csv"), fixations_csv(&fixations))?;
        fs::write(dir.join("saccades.csv"), saccades_csv(&saccades))?;
        fs::write(dir.join("metrics.csv"), metrics_csv(&rows))?;
        fs::write(dir.join("heatmap.csv"), hm.to_csv())?;
        fs::write(dir.join("heatmap.pgm"), hm.to_pgm())?;
    }
    Ok(ExitCode::SUCCESS)
}
