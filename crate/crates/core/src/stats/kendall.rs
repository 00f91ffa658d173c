//! Kendall's tau-b with the normal-approximation test, counted in O(n log n).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::model::{median, FleetDataset, FrequencySeries};

pub const MIN_KENDALL_SAMPLES: usize = 10;
pub const DEFAULT_ALPHA: f64 = 0.01;

/// Pair counts underlying tau-b.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KendallCounts {
    pub n: u64,
    pub concordant: u64,
    pub discordant: u64,
    /// Pairs tied in x (including those also tied in y).
    pub ties_x: u64,
    /// Pairs tied in y (including those also tied in x).
    pub ties_y: u64,
    /// Pairs tied in both.
    pub ties_xy: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendTestResult {
    pub n: usize,
    pub tau: f64,
    pub concordant: u64,
    pub discordant: u64,
    pub z: f64,
    /// Two-sided.
    pub p_value: f64,
    pub alpha: f64,
    pub significant: bool,
}

fn pairs(t: u64) -> u64 {
    t * t.saturating_sub(1) / 2
}

/// Tie-group size statistics: Σ t(t−1)/2, Σ t(t−1)(t−2), Σ t(t−1)(2t+5).
fn tie_terms(sorted: &[f64]) -> (u64, f64, f64) {
    let (mut p, mut v0, mut v1) = (0u64, 0.0, 0.0);
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i + 1;
        while j < sorted.len() && sorted[j] == sorted[i] {
            j += 1;
        }
        let t = (j - i) as u64;
        if t > 1 {
            let tf = t as f64;
            p += pairs(t);
            v0 += tf * (tf - 1.0) * (tf - 2.0);
            v1 += tf * (tf - 1.0) * (2.0 * tf + 5.0);
        }
        i = j;
    }
    (p, v0, v1)
}

/// Counts inversions of `v` while merge-sorting it in place.
fn count_inversions(v: &mut [f64], buf: &mut [f64]) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut inv = count_inversions(&mut v[..mid], &mut buf[..mid]) + count_inversions(&mut v[mid..], &mut buf[mid..]);
    let (mut i, mut j, mut k) = (0, mid, 0);
    while i < mid && j < n {
        if v[j] < v[i] {
            buf[k] = v[j];
            inv += (mid - i) as u64;
            j += 1;
        } else {
            buf[k] = v[i];
            i += 1;
        }
        k += 1;
    }
    buf[k..k + mid - i].copy_from_slice(&v[i..mid]);
    k += mid - i;
    buf[k..k + n - j].copy_from_slice(&v[j..n]);
    v.copy_from_slice(&buf[..n]);
    inv
}

struct TieStats {
    counts: KendallCounts,
    x_terms: (f64, f64),
    y_terms: (f64, f64),
}

fn count_pairs(x: &[f64], y: &[f64]) -> TieStats {
    let n = x.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]).then(y[a].total_cmp(&y[b])));
    let xs: Vec<f64> = idx.iter().map(|&i| x[i]).collect();
    let mut ys: Vec<f64> = idx.iter().map(|&i| y[i]).collect();

    let (ties_x, x0, x1) = tie_terms(&xs);
    let mut ties_xy = 0u64;
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && xs[j] == xs[i] && ys[j] == ys[i] {
            j += 1;
        }
        ties_xy += pairs((j - i) as u64);
        i = j;
    }
    // within x-tie groups y is already ascending, so every inversion is a
    // pair with x_i < x_j and y_i > y_j
    let mut buf = vec![0.0; n];
    let discordant = count_inversions(&mut ys, &mut buf);
    let (ties_y, y0, y1) = tie_terms(&ys);
    let total = pairs(n as u64);
    let concordant = total + ties_xy - ties_x - ties_y - discordant;
    TieStats {
        counts: KendallCounts {
            n: n as u64,
            concordant,
            discordant,
            ties_x,
            ties_y,
            ties_xy,
        },
        x_terms: (x0, x1),
        y_terms: (y0, y1),
    }
}

/// Tau-b between two samples, with the pair counts it was computed from.
pub fn kendall_tau_b(x: &[f64], y: &[f64]) -> Result<(f64, KendallCounts)> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    if x.iter().chain(y).any(|v| v.is_nan()) {
        return Err(Error::Numerical("NaN in Kendall input".into()));
    }
    let c = count_pairs(x, y).counts;
    Ok((tau_from_counts(&c), c))
}

fn tau_from_counts(c: &KendallCounts) -> f64 {
    let total = pairs(c.n) as f64;
    let denom = ((total - c.ties_x as f64) * (total - c.ties_y as f64)).sqrt();
    if denom > 0.0 {
        (c.concordant as f64 - c.discordant as f64) / denom
    } else {
        0.0
    }
}

fn test_pairs(x: &[f64], y: &[f64], alpha: f64) -> Result<TrendTestResult> {
    let n = y.len();
    if n < MIN_KENDALL_SAMPLES {
        return Err(Error::SampleTooSmall {
            n,
            min: MIN_KENDALL_SAMPLES,
        });
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid("alpha", "significance level must lie in (0, 1)"));
    }
    if y.iter().any(|v| v.is_nan()) {
        return Err(Error::Numerical("NaN in Kendall input".into()));
    }
    let stats = count_pairs(x, y);
    let c = stats.counts;
    let tau = tau_from_counts(&c);

    let nf = n as f64;
    let m = nf * (nf - 1.0);
    let (x0, x1) = stats.x_terms;
    let (y0, y1) = stats.y_terms;
    let var = (m * (2.0 * nf + 5.0) - x1 - y1) / 18.0
        + 2.0 * c.ties_x as f64 * c.ties_y as f64 / m
        + x0 * y0 / (9.0 * m * (nf - 2.0));
    let s = c.concordant as f64 - c.discordant as f64;
    // an all-tied sample carries no evidence of a trend
    let (z, p_value) = if var > 0.0 && tau != 0.0 {
        let z = s / var.sqrt();
        (z, erfc(z.abs() / std::f64::consts::SQRT_2).min(1.0))
    } else {
        (0.0, 1.0)
    };
    Ok(TrendTestResult {
        n,
        tau,
        concordant: c.concordant,
        discordant: c.discordant,
        z,
        p_value,
        alpha,
        significant: p_value < alpha,
    })
}

/// Kendall test of `values` against their sample index.
pub fn kendall_tau_values(values: &[f64], alpha: f64) -> Result<TrendTestResult> {
    let index: Vec<f64> = (0..values.len()).map(|i| i as f64).collect();
    test_pairs(&index, values, alpha)
}

/// Kendall test of a series' frequencies against time.
pub fn kendall_tau(series: &FrequencySeries, alpha: f64) -> Result<TrendTestResult> {
    kendall_tau_values(&series.frequencies, alpha)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesTrend {
    pub device_id: String,
    pub ro_id: String,
    pub tau: f64,
    pub p_value: f64,
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FleetTrendTest {
    pub alpha: f64,
    pub per_series: Vec<SeriesTrend>,
    /// Taus of the significant series, in dataset order.
    pub retained_taus: Vec<f64>,
    pub discarded_fraction: f64,
    pub median_tau: Option<f64>,
}

/// Kendall test on every (trend-extracted) series; non-significant ones are discarded.
pub fn fleet_trend_test(dataset: &FleetDataset, alpha: f64) -> Result<FleetTrendTest> {
    dataset.require_continuous()?;
    let per_series = dataset
        .series
        .par_iter()
        .map(|s| {
            kendall_tau(s, alpha)
                .map(|r| SeriesTrend {
                    device_id: s.device_id.clone(),
                    ro_id: s.ro_id.clone(),
                    tau: r.tau,
                    p_value: r.p_value,
                    significant: r.significant,
                })
                .map_err(|e| e.context(s.label()))
        })
        .collect::<Result<Vec<_>>>()?;
    let retained_taus: Vec<f64> = per_series.iter().filter(|s| s.significant).map(|s| s.tau).collect();
    let discarded_fraction = if per_series.is_empty() {
        0.0
    } else {
        1.0 - retained_taus.len() as f64 / per_series.len() as f64
    };
    Ok(FleetTrendTest {
        alpha,
        median_tau: median(&retained_taus).ok(),
        retained_taus,
        discarded_fraction,
        per_series,
    })
}
