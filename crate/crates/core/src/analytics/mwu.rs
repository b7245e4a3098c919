use std::fmt::Write as _;

use serde::Serialize;
use statrs::function::erf::erfc;
use thiserror::Error;

/// Standard normal cumulative distribution.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MwuOptions {
    /// Subtract 0.5 from |U1 - mu| before standardizing.
    pub continuity: bool,
    /// Reduce the variance for tied ranks.
    pub tie_correction: bool,
}

impl Default for MwuOptions {
    fn default() -> Self {
        Self {
            continuity: true,
            tie_correction: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MwuResult {
    pub n1: usize,
    pub n2: usize,
    pub rank_sum_1: f64,
    pub rank_sum_2: f64,
    pub u1: f64,
    pub u2: f64,
    pub u: f64,
    pub mu: f64,
    pub sigma: f64,
    /// Signed by `U1 - mu`, so positive when the first sample ranks higher.
    pub z: f64,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MwuError {
    #[error("both samples need at least one value")]
    EmptySample,
    #[error("sample contains a non-finite value")]
    NonFinite,
    #[error("zero variance (all values tied)")]
    DegenerateVariance(MwuResult),
}

/// Midranks (1-based) of `values`, plus the tie term sum(t^3 - t).
pub fn midranks(values: &[f64]) -> (Vec<f64>, f64) {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut ties = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i + 1;
        while j < idx.len() && values[idx[j]] == values[idx[i]] {
            j += 1;
        }
        // positions i..j share ranks i+1..=j
        let r = (i + 1 + j) as f64 / 2.0;
        for &k in &idx[i..j] {
            ranks[k] = r;
        }
        let t = (j - i) as f64;
        ties += t * t * t - t;
        i = j;
    }
    (ranks, ties)
}

/// Two-sided Mann-Whitney U test with the normal approximation.
pub fn mann_whitney(x: &[f64], y: &[f64], opts: MwuOptions) -> Result<MwuResult, MwuError> {
    if x.is_empty() || y.is_empty() {
        return Err(MwuError::EmptySample);
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(MwuError::NonFinite);
    }
    let (n1, n2) = (x.len(), y.len());
    let pooled: Vec<f64> = x.iter().chain(y).copied().collect();
    let (ranks, ties) = midranks(&pooled);
    let rank_sum_1: f64 = ranks[..n1].iter().sum();
    let rank_sum_2: f64 = ranks[n1..].iter().sum();

    let (f1, f2) = (n1 as f64, n2 as f64);
    let n = f1 + f2;
    let u1 = rank_sum_1 - f1 * (f1 + 1.0) / 2.0;
    let u2 = f1 * f2 - u1;
    let mu = f1 * f2 / 2.0;
    let mut var = f1 * f2 * (n + 1.0) / 12.0;
    if opts.tie_correction {
        var -= f1 * f2 * ties / (12.0 * n * (n - 1.0));
    }
    // all values tied: the corrected variance is exactly zero
    let sigma = if opts.tie_correction && ties == n * n * n - n {
        0.0
    } else {
        var.max(0.0).sqrt()
    };

    let mut res = MwuResult {
        n1,
        n2,
        rank_sum_1,
        rank_sum_2,
        u1,
        u2,
        u: u1.min(u2),
        mu,
        sigma,
        z: 0.0,
        p: 1.0,
    };
    if sigma == 0.0 {
        return Err(MwuError::DegenerateVariance(res));
    }
    let dev = (u1 - mu).abs();
    let dev = if opts.continuity {
        (dev - 0.5).max(0.0)
    } else {
        dev
    };
    let z = (u1 - mu).signum() * dev / sigma;
    // signum(0.0) is 1.0, keep zero unsigned
    res.z = if dev == 0.0 { 0.0 } else { z };
    res.p = (2.0 * (1.0 - normal_cdf(res.z.abs()))).clamp(0.0, 1.0);
    Ok(res)
}

impl MwuResult {
    /// One line: `n1=.. n2=.. R1=.. R2=.. U=.. Z=.. p=..`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = write!(
            s,
            "n1={} n2={} R1={} R2={} U={} Z={:.2} p={}",
            self.n1,
            self.n2,
            fmt_num(self.rank_sum_1),
            fmt_num(self.rank_sum_2),
            fmt_num(self.u),
            self.z,
            fmt_p(self.p)
        );
        s
    }

    pub const CSV_HEADER: &'static str = "n1,n2,rank_sum_1,rank_sum_2,u,z,p";

    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{:.4},{:.6}",
            self.n1,
            self.n2,
            fmt_num(self.rank_sum_1),
            fmt_num(self.rank_sum_2),
            fmt_num(self.u),
            self.z,
            self.p
        )
    }
}

fn fmt_num(v: f64) -> String {
    if v.fract() == 0.0 {
        format!("{v:.0}")
    } else {
        format!("{v}")
    }
}

/// Two decimals for p >= 0.1, otherwise three.
fn fmt_p(p: f64) -> String {
    if p >= 0.1 {
        format!("{p:.2}")
    } else {
        format!("{p:.3}")
    }
}
