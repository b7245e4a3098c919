//! Fixation detection, AOI metrics and heatmaps over gaze samples.

use std::fmt::Write as _;
use std::io::Read;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GazeSample {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub valid: bool,
}

impl GazeSample {
    pub fn new(t: f64, x: f64, y: f64) -> Self {
        Self {
            t,
            x,
            y,
            valid: true,
        }
    }
}

/// Dispersion-threshold detector settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdtConfig {
    /// Maximum of (x range + y range) over a window, in pixels.
    pub dispersion_px: f64,
    pub min_dur: f64,
    pub max_dur: f64,
}

impl Default for IdtConfig {
    fn default() -> Self {
        Self {
            dispersion_px: 50.0,
            min_dur: 0.15,
            max_dur: 1.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Fixation {
    pub start_t: f64,
    pub end_t: f64,
    pub x: f64,
    pub y: f64,
    pub sample_count: usize,
    /// Index of the first member sample in the input.
    pub first_sample: usize,
}

impl Fixation {
    pub fn duration(&self) -> f64 {
        self.end_t - self.start_t
    }

    pub fn samples(&self) -> std::ops::Range<usize> {
        self.first_sample..self.first_sample + self.sample_count
    }
}

/// x range plus y range of a window.
pub fn dispersion(samples: &[GazeSample]) -> f64 {
    let mut b = Bounds::new(&samples[0]);
    for s in &samples[1..] {
        b.add(s);
    }
    b.dispersion()
}

struct Bounds {
    min_x: f64,
    max_x: f64,
    min_y: f64,
    max_y: f64,
}

impl Bounds {
    fn new(s: &GazeSample) -> Self {
        Self {
            min_x: s.x,
            max_x: s.x,
            min_y: s.y,
            max_y: s.y,
        }
    }

    fn add(&mut self, s: &GazeSample) {
        self.min_x = self.min_x.min(s.x);
        self.max_x = self.max_x.max(s.x);
        self.min_y = self.min_y.min(s.y);
        self.max_y = self.max_y.max(s.y);
    }

    fn dispersion(&self) -> f64 {
        (self.max_x - self.min_x) + (self.max_y - self.min_y)
    }

    fn with(&self, s: &GazeSample) -> Self {
        let mut b = Self { ..*self };
        b.add(s);
        b
    }
}

/// Greedy I-DT. From each valid sample the window grows while the next
/// sample is valid, the dispersion stays within bounds and the span stays
/// within `max_dur`. A window spanning at least `min_dur` becomes a fixation
/// and scanning resumes after it; otherwise the start moves on by one.
pub fn detect_fixations(samples: &[GazeSample], cfg: &IdtConfig) -> Vec<Fixation> {
    let mut out = Vec::new();
    let n = samples.len();
    let mut i = 0;
    while i < n {
        if !samples[i].valid {
            i += 1;
            continue;
        }
        let mut bounds = Bounds::new(&samples[i]);
        let mut j = i;
        while j + 1 < n {
            let next = &samples[j + 1];
            if !next.valid || next.t - samples[i].t > cfg.max_dur {
                break;
            }
            let grown = bounds.with(next);
            if grown.dispersion() > cfg.dispersion_px {
                break;
            }
            bounds = grown;
            j += 1;
        }
        if samples[j].t - samples[i].t >= cfg.min_dur {
            let members = &samples[i..=j];
            let k = members.len() as f64;
            out.push(Fixation {
                start_t: samples[i].t,
                end_t: samples[j].t,
                x: members.iter().map(|s| s.x).sum::<f64>() / k,
                y: members.iter().map(|s| s.y).sum::<f64>() / k,
                sample_count: members.len(),
                first_sample: i,
            });
            i = j + 1;
        } else {
            i += 1;
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Saccade {
    pub from: usize,
    pub to: usize,
    pub duration: f64,
    pub amplitude: f64,
}

pub fn extract_saccades(fixations: &[Fixation]) -> Vec<Saccade> {
    fixations
        .windows(2)
        .enumerate()
        .map(|(i, w)| Saccade {
            from: i,
            to: i + 1,
            duration: (w[1].start_t - w[0].end_t).max(0.0),
            amplitude: (w[1].x - w[0].x).hypot(w[1].y - w[0].y),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aoi {
    pub id: String,
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
    pub t_start: f64,
    pub t_end: f64,
}

impl Aoi {
    /// Half-open: the left and top edges are inside, right and bottom are not.
    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x && x < self.x + self.w && y >= self.y && y < self.y + self.h
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AoiMetrics {
    pub view_count: usize,
    pub focus_time: f64,
    pub time_to_first_view: Option<f64>,
    pub revisit_count: usize,
}

/// Attention on one AOI. Only fixations overlapping the active window count,
/// clipped to it; a view is a run of consecutive such fixations centred in
/// the rectangle.
pub fn aoi_metrics(fixations: &[Fixation], aoi: &Aoi) -> AoiMetrics {
    let mut m = AoiMetrics {
        view_count: 0,
        focus_time: 0.0,
        time_to_first_view: None,
        revisit_count: 0,
    };
    let mut in_view = false;
    for f in fixations {
        let start = f.start_t.max(aoi.t_start);
        let end = f.end_t.min(aoi.t_end);
        if end <= start {
            continue;
        }
        if aoi.contains(f.x, f.y) {
            if !in_view {
                m.view_count += 1;
                m.time_to_first_view.get_or_insert(start - aoi.t_start);
            }
            m.focus_time += end - start;
            in_view = true;
        } else {
            in_view = false;
        }
    }
    m.revisit_count = m.view_count.saturating_sub(1);
    m
}

/// Row-major intensity grid in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    pub cols: usize,
    pub rows: usize,
    pub values: Vec<f64>,
}

impl Heatmap {
    pub fn get(&self, col: usize, row: usize) -> f64 {
        self.values[row * self.cols + col]
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for row in self.values.chunks(self.cols) {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:.4}")).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    /// Binary greyscale PGM, 255 at the peak.
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.cols, self.rows).into_bytes();
        out.extend(
            self.values
                .iter()
                .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8),
        );
        out
    }
}

/// Duration-weighted Gaussian density at cell centres, sigma one cell width,
/// scaled so the hottest cell is 1.
pub fn heatmap(
    fixations: &[Fixation],
    cols: usize,
    rows: usize,
    width: f64,
    height: f64,
) -> Heatmap {
    assert!(
        cols >= 1 && rows >= 1,
        "heatmap grid needs at least one cell"
    );
    let cw = width / cols as f64;
    let ch = height / rows as f64;
    let two_var = 2.0 * cw * cw;
    let mut values = vec![0.0; cols * rows];
    for (r, row) in values.chunks_mut(cols).enumerate() {
        let cy = (r as f64 + 0.5) * ch;
        for (c, cell) in row.iter_mut().enumerate() {
            let cx = (c as f64 + 0.5) * cw;
            *cell = fixations
                .iter()
                .map(|f| {
                    let d2 = (cx - f.x).powi(2) + (cy - f.y).powi(2);
                    f.duration() * (-d2 / two_var).exp()
                })
                .sum();
        }
    }
    let max = values.iter().copied().fold(0.0, f64::max);
    if max > 0.0 {
        for v in &mut values {
            *v /= max;
        }
    }
    Heatmap { cols, rows, values }
}

#[derive(Debug, Error)]
pub enum GazeIoError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
}

fn parse_valid(raw: &str) -> Option<bool> {
    match raw.to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" => Some(true),
        "0" | "false" | "no" => Some(false),
        _ => None,
    }
}

/// Read `t,x,y,valid` samples. The header row is required.
pub fn read_samples_csv<R: Read>(r: R) -> Result<Vec<GazeSample>, GazeIoError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(r);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_ascii_lowercase).collect();
    if header != ["t", "x", "y", "valid"] {
        return Err(GazeIoError::Line {
            line: 1,
            message: format!("expected header t,x,y,valid, got {}", header.join(",")),
        });
    }
    let mut out: Vec<GazeSample> = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let line = i + 2;
        let row = row?;
        let bad = |what: &str| GazeIoError::Line {
            line,
            message: format!("bad {what}"),
        };
        let num = |k: usize, what: &str| -> Result<f64, GazeIoError> {
            row.get(k)
                .and_then(|v| v.parse::<f64>().ok())
                .filter(|v| v.is_finite())
                .ok_or_else(|| bad(what))
        };
        let s = GazeSample {
            t: num(0, "t")?,
            x: num(1, "x")?,
            y: num(2, "y")?,
            valid: row
                .get(3)
                .and_then(parse_valid)
                .ok_or_else(|| bad("valid"))?,
        };
        if out.last().is_some_and(|p| p.t >= s.t) {
            return Err(GazeIoError::Line {
                line,
                message: "timestamps must increase".into(),
            });
        }
        out.push(s);
    }
    Ok(out)
}

/// Read AOI definitions, one per line: `id x y w h t_start t_end`. Blank
/// lines and lines starting with `#` are skipped.
pub fn read_aoi_file(text: &str) -> Result<Vec<Aoi>, GazeIoError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |message: String| GazeIoError::Line {
            line: i + 1,
            message,
        };
        let parts: Vec<&str> = line.split_whitespace().collect();
        if parts.len() != 7 {
            return Err(err(format!("expected 7 fields, got {}", parts.len())));
        }
        let mut nums = [0.0; 6];
        for (k, p) in parts[1..].iter().enumerate() {
            nums[k] = p
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| err(format!("bad number {p:?}")))?;
        }
        let [x, y, w, h, t_start, t_end] = nums;
        if w <= 0.0 || h <= 0.0 {
            return Err(err("width and height must be positive".into()));
        }
        if t_start >= t_end {
            return Err(err("t_start must precede t_end".into()));
        }
        out.push(Aoi {
            id: parts[0].to_owned(),
            x,
            y,
            w,
            h,
            t_start,
            t_end,
        });
    }
    Ok(out)
}

pub fn fixations_csv(fixations: &[Fixation]) -> String {
    let mut out = String::from("index,start_t,end_t,duration,x,y,samples\n");
    for (i, f) in fixations.iter().enumerate() {
        let _ = writeln!(
            out,
            "{i},{:.4},{:.4},{:.4},{:.2},{:.2},{}",
            f.start_t,
            f.end_t,
            f.duration(),
            f.x,
            f.y,
            f.sample_count
        );
    }
    out
}

pub fn saccades_csv(saccades: &[Saccade]) -> String {
    let mut out = String::from("from,to,duration,amplitude\n");
    for s in saccades {
        let _ = writeln!(
            out,
            "{},{},{:.4},{:.2}",
            s.from, s.to, s.duration, s.amplitude
        );
    }
    out
}

pub fn metrics_csv(rows: &[(String, AoiMetrics)]) -> String {
    let mut out = String::from("aoi,views,focus_time,time_to_first_view,revisits\n");
    for (id, m) in rows {
        let first = m
            .time_to_first_view
            .map(|t| format!("{t:.4}"))
            .unwrap_or_default();
        let _ = writeln!(
            out,
            "{id},{},{:.4},{first},{}",
            m.view_count, m.focus_time, m.revisit_count
        );
    }
    out
}
