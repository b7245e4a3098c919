//! Slow reference implementations used to cross-check the real ones.

#![allow(dead_code)]

use promtrial_core::gaze::{Aoi, AoiMetrics, Fixation, GazeSample, IdtConfig};
use proptest::prelude::*;

/// erf from its Maclaurin series. Good to ~1e-10 for |x| <= 4.5.
pub fn erf_series(x: f64) -> f64 {
    let mut sum = 0.0;
    let mut term = x; // (-1)^n x^(2n+1) / n!
    for n in 0..200 {
        let contrib = term / (2 * n + 1) as f64;
        sum += contrib;
        if contrib.abs() < 1e-17 {
            break;
        }
        term *= -x * x / (n + 1) as f64;
    }
    2.0 / std::f64::consts::PI.sqrt() * sum
}

pub fn phi_series(z: f64) -> f64 {
    0.5 * (1.0 + erf_series(z / std::f64::consts::SQRT_2))
}

/// U for the first sample by counting pairs, ties worth one half.
pub fn u_by_pairs(x: &[f64], y: &[f64]) -> f64 {
    let mut u = 0.0;
    for a in x {
        for b in y {
            if a > b {
                u += 1.0;
            } else if a == b {
                u += 0.5;
            }
        }
    }
    u
}

/// Fixation windows `(first, last)` sample indices. Every window meeting the
/// constraints is enumerated; then, scanning left to right, the earliest
/// start not yet consumed is taken with its longest qualifying end.
pub fn fixation_windows(s: &[GazeSample], cfg: &IdtConfig) -> Vec<(usize, usize)> {
    let n = s.len();
    let mut longest: Vec<Option<usize>> = vec![None; n];
    for a in 0..n {
        let (mut lx, mut hx, mut ly, mut hy) = (s[a].x, s[a].x, s[a].y, s[a].y);
        let mut all_valid = true;
        for b in a..n {
            all_valid &= s[b].valid;
            lx = lx.min(s[b].x);
            hx = hx.max(s[b].x);
            ly = ly.min(s[b].y);
            hy = hy.max(s[b].y);
            let span = s[b].t - s[a].t;
            let ok = all_valid
                && (hx - lx) + (hy - ly) <= cfg.dispersion_px
                && span <= cfg.max_dur
                && span >= cfg.min_dur;
            if ok {
                longest[a] = Some(b);
            }
        }
    }
    let mut out = Vec::new();
    let mut p = 0;
    while let Some(a) = (p..n).find(|&a| longest[a].is_some()) {
        let b = longest[a].unwrap();
        out.push((a, b));
        p = b + 1;
    }
    out
}

pub fn centroid(s: &[GazeSample], first: usize, last: usize) -> (f64, f64) {
    let k = (last - first + 1) as f64;
    let sx: f64 = s[first..=last].iter().map(|p| p.x).sum();
    let sy: f64 = s[first..=last].iter().map(|p| p.y).sum();
    (sx / k, sy / k)
}

/// AOI metrics by marking each fixation and counting run starts.
pub fn aoi_scan(fixations: &[Fixation], aoi: &Aoi) -> AoiMetrics {
    let mut marks: Vec<(bool, f64, f64)> = Vec::new();
    for f in fixations {
        let start = if f.start_t > aoi.t_start {
            f.start_t
        } else {
            aoi.t_start
        };
        let end = if f.end_t < aoi.t_end {
            f.end_t
        } else {
            aoi.t_end
        };
        if end - start > 0.0 {
            let inside = f.x >= aoi.x && f.x < aoi.x + aoi.w && f.y >= aoi.y && f.y < aoi.y + aoi.h;
            marks.push((inside, start, end));
        }
    }
    let mut views = 0;
    let mut first = None;
    let mut focus = 0.0;
    for k in 0..marks.len() {
        let (inside, start, end) = marks[k];
        if !inside {
            continue;
        }
        focus += end - start;
        if k == 0 || !marks[k - 1].0 {
            views += 1;
            if first.is_none() {
                first = Some(start - aoi.t_start);
            }
        }
    }
    AoiMetrics {
        view_count: views,
        focus_time: focus,
        time_to_first_view: first,
        revisit_count: if views > 0 { views - 1 } else { 0 },
    }
}

pub const SCREEN_W: f64 = 1920.0;
pub const SCREEN_H: f64 = 1080.0;

#[derive(Debug, Clone)]
pub struct Step {
    jump: bool,
    dx: i32,
    dy: i32,
    valid: bool,
    gap: bool,
}

fn step() -> impl Strategy<Value = Step> {
    (
        prop::bool::weighted(0.04),
        -4i32..=4,
        -4i32..=4,
        prop::bool::weighted(0.97),
        prop::bool::weighted(0.01),
    )
        .prop_map(|(jump, dx, dy, valid, gap)| Step {
            jump,
            dx,
            dy,
            valid,
            gap,
        })
}

/// A 60 Hz random walk with saccade-like jumps, dropouts and time gaps,
/// integer pixel coordinates kept on screen.
pub fn trace(max_len: usize) -> impl Strategy<Value = Vec<GazeSample>> {
    (
        0i32..1920,
        0i32..1080,
        proptest::collection::vec(step(), 1..=max_len),
    )
        .prop_map(|(x0, y0, steps)| {
            let (mut x, mut y) = (x0, y0);
            let mut frame = 0i64;
            let mut out = Vec::with_capacity(steps.len());
            for s in steps {
                if s.jump {
                    x += s.dx * 60;
                    y += s.dy * 40;
                } else {
                    x += s.dx;
                    y += s.dy;
                }
                x = x.clamp(0, SCREEN_W as i32 - 1);
                y = y.clamp(0, SCREEN_H as i32 - 1);
                frame += if s.gap { 7 } else { 1 };
                out.push(GazeSample {
                    t: frame as f64 / 60.0,
                    x: x as f64,
                    y: y as f64,
                    valid: s.valid,
                });
            }
            out
        })
}

pub fn aoi() -> impl Strategy<Value = Aoi> {
    (
        0u32..1800,
        0u32..1000,
        20u32..800,
        20u32..600,
        0u32..300,
        1u32..600,
    )
        .prop_map(|(x, y, w, h, t0, len)| Aoi {
            id: "a".into(),
            x: x as f64,
            y: y as f64,
            w: w as f64,
            h: h as f64,
            t_start: t0 as f64 / 60.0,
            t_end: (t0 + len) as f64 / 60.0,
        })
}
