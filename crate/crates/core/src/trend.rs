//! Trend extraction and relative frequency shifts.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{median, FleetDataset, FrequencySeries, GridLocation};

/// Smoothing factor whose weights halve after `tau` lags: `1 − exp(−ln 2 / τ)`.
pub fn half_life_to_alpha(tau: f64) -> Result<f64> {
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::invalid("tau", format!("half-life must be positive, got {tau}")));
    }
    Ok(1.0 - (-std::f64::consts::LN_2 / tau).exp())
}

/// Converts a half-life in seconds to sample periods.
pub fn half_life_in_samples(half_life_seconds: i64, sample_period: i64) -> Result<f64> {
    if sample_period <= 0 {
        return Err(Error::invalid("sample_period", "must be positive"));
    }
    Ok(half_life_seconds as f64 / sample_period as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EwmaConfig {
    /// Half-life in sample periods.
    pub half_life: f64,
    /// Normalise the weights over the samples seen so far.
    pub adjusted: bool,
}

impl EwmaConfig {
    pub fn new(half_life: f64) -> Self {
        Self {
            half_life,
            adjusted: true,
        }
    }
}

/// Exponentially weighted mean of `values` with factor `alpha`.
///
/// Lags are counted in samples; gaps in the timestamps are not taken into account.
pub fn ewma_values(values: &[f64], alpha: f64, adjusted: bool) -> Vec<f64> {
    let Some(&origin) = values.first() else {
        return Vec::new();
    };
    let decay = 1.0 - alpha;
    let mut out = Vec::with_capacity(values.len());
    if adjusted {
        let (mut num, mut den) = (0.0, 0.0);
        for &x in values {
            num = (x - origin) + decay * num;
            den = 1.0 + decay * den;
            out.push(origin + num / den);
        }
    } else {
        let mut level = 0.0;
        for &x in values {
            level = alpha * (x - origin) + decay * level;
            out.push(origin + level);
        }
    }
    out
}

pub fn ewma(series: &FrequencySeries, cfg: &EwmaConfig) -> Result<FrequencySeries> {
    if series.is_empty() {
        return Err(Error::EmptySample);
    }
    let alpha = half_life_to_alpha(cfg.half_life)?;
    Ok(series.with_frequencies(ewma_values(&series.frequencies, alpha, cfg.adjusted)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoessConfig {
    /// Fraction of the points in each local window.
    pub span: f64,
    /// Polynomial degree; only local linear fits are supported.
    pub degree: u8,
}

impl LoessConfig {
    pub fn new(span: f64) -> Self {
        Self { span, degree: 1 }
    }
}

fn tricube(u: f64) -> f64 {
    let a = u.abs();
    if a >= 1.0 {
        0.0
    } else {
        let t = 1.0 - a * a * a;
        t * t * t
    }
}

/// Local linear regression with tricube weights, evaluated at every `x[i]`.
/// `x` must be strictly increasing.
pub fn loess_values(x: &[f64], y: &[f64], span: f64) -> Result<Vec<f64>> {
    let n = x.len();
    if y.len() != n {
        return Err(Error::LengthMismatch {
            left: n,
            right: y.len(),
        });
    }
    if !(span > 0.0 && span <= 1.0) {
        return Err(Error::invalid("span", format!("{span} is outside (0, 1]")));
    }
    if span * (n as f64) < 4.0 {
        return Err(Error::SeriesTooShort(format!(
            "LOESS window too small: span {span} over {n} points, need span·n ≥ 4"
        )));
    }
    let q = ((span * n as f64).floor() as usize).min(n);
    let mut out = Vec::with_capacity(n);
    let mut lo = 0usize;
    for i in 0..n {
        if lo + q <= i {
            lo = i + 1 - q;
        }
        while lo + q < n && x[lo + q] - x[i] < x[i] - x[lo] {
            lo += 1;
        }
        let hi = lo + q; // exclusive
        let d_max = (x[i] - x[lo]).max(x[hi - 1] - x[i]);
        let y_ref = y[i];
        let (mut sw, mut su, mut sy, mut suu, mut suy) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for j in lo..hi {
            let u = (x[j] - x[i]) / d_max;
            let w = tricube(u);
            let dy = y[j] - y_ref;
            sw += w;
            su += w * u;
            sy += w * dy;
            suu += w * u * u;
            suy += w * u * dy;
        }
        if !(sw > 0.0) {
            return Err(Error::Numerical(format!("LOESS window at index {i} has no weight")));
        }
        let (mu, my) = (su / sw, sy / sw);
        let var = suu / sw - mu * mu;
        let fit = if var > 1e-14 {
            let slope = (suy / sw - mu * my) / var;
            my - slope * mu
        } else {
            my
        };
        out.push(y_ref + fit);
    }
    Ok(out)
}

/// LOESS trend on the elapsed-time axis of the series.
pub fn loess_trend(series: &FrequencySeries, cfg: &LoessConfig) -> Result<FrequencySeries> {
    if cfg.degree != 1 {
        return Err(Error::invalid(
            "degree",
            "only local linear fits (degree 1) are supported",
        ));
    }
    let t0 = series.timestamps.first().copied().unwrap_or(0);
    let x: Vec<f64> = series.timestamps.iter().map(|&t| (t - t0) as f64).collect();
    Ok(series.with_frequencies(loess_values(&x, &series.frequencies, cfg.span)?))
}

/// Relative shift of one oscillator between two epochs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftRecord {
    pub device_id: String,
    pub ro_id: String,
    pub location: GridLocation,
    /// Median frequency of the initial epoch, Hz.
    pub f0_median: f64,
    /// Median frequency of the final epoch, Hz.
    pub f1_median: f64,
    pub delta: f64,
}

impl ShiftRecord {
    fn from_medians(series: &FrequencySeries, f0: f64, f1: f64) -> Result<Self> {
        if !(f0 > 0.0) {
            return Err(Error::invalid("f0_median", "initial median must be positive"));
        }
        Ok(Self {
            device_id: series.device_id.clone(),
            ro_id: series.ro_id.clone(),
            location: series.location,
            f0_median: f0,
            f1_median: f1,
            delta: (f1 - f0) / f0,
        })
    }
}

/// Shift between the medians of two measurement epochs of the same oscillator.
pub fn epoch_shift(first: &FrequencySeries, second: &FrequencySeries) -> Result<ShiftRecord> {
    if first.key() != second.key() {
        return Err(Error::IdentityMismatch(format!(
            "{} vs {}",
            first.label(),
            second.label()
        )));
    }
    let f0 = median(&first.frequencies)?;
    let f1 = median(&second.frequencies)?;
    ShiftRecord::from_medians(first, f0, f1)
}

/// Shift between the medians of the first and the last `window` seconds of a
/// (normally trend-extracted) series.
pub fn window_shift(series: &FrequencySeries, window: i64) -> Result<ShiftRecord> {
    if window <= 0 {
        return Err(Error::invalid("window", "must be positive"));
    }
    if series.is_empty() {
        return Err(Error::EmptySample);
    }
    if series.span() < 2 * window {
        return Err(Error::SeriesTooShort(format!(
            "{} spans {} s, need at least twice the {window} s window",
            series.label(),
            series.span()
        )));
    }
    let t0 = series.timestamps[0];
    let t_end = *series.timestamps.last().unwrap();
    let head: Vec<f64> = series
        .timestamps
        .iter()
        .zip(&series.frequencies)
        .take_while(|(&t, _)| t < t0 + window)
        .map(|(_, &f)| f)
        .collect();
    let tail: Vec<f64> = series
        .timestamps
        .iter()
        .zip(&series.frequencies)
        .filter(|(&t, _)| t > t_end - window)
        .map(|(_, &f)| f)
        .collect();
    ShiftRecord::from_medians(series, median(&head)?, median(&tail)?)
}

/// Linear interpolation onto a regular grid `t0, t0 + period, …` up to the last sample.
pub fn resample_regular(series: &FrequencySeries, period: i64) -> Result<FrequencySeries> {
    if period <= 0 {
        return Err(Error::invalid("period", "must be positive"));
    }
    if series.is_empty() {
        return Err(Error::EmptySample);
    }
    let ts = &series.timestamps;
    let fs = &series.frequencies;
    let t0 = ts[0];
    let steps = (ts[ts.len() - 1] - t0) / period;
    let mut j = 0usize;
    let mut timestamps = Vec::with_capacity(steps as usize + 1);
    let mut frequencies = Vec::with_capacity(steps as usize + 1);
    for k in 0..=steps {
        let t = t0 + k * period;
        while j + 1 < ts.len() && ts[j + 1] <= t {
            j += 1;
        }
        let f = if ts[j] == t || j + 1 == ts.len() {
            fs[j]
        } else {
            let w = (t - ts[j]) as f64 / (ts[j + 1] - ts[j]) as f64;
            fs[j] + w * (fs[j + 1] - fs[j])
        };
        timestamps.push(t);
        frequencies.push(f);
    }
    Ok(FrequencySeries::new(
        series.device_id.clone(),
        series.ro_id.clone(),
        series.location,
        timestamps,
        frequencies,
    ))
}

/// Trend-extraction method applied to every series of a fleet.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum TrendMethod {
    Ewma(EwmaConfig),
    Loess(LoessConfig),
}

pub fn extract_trend(series: &FrequencySeries, method: &TrendMethod) -> Result<FrequencySeries> {
    match method {
        TrendMethod::Ewma(cfg) => ewma(series, cfg),
        TrendMethod::Loess(cfg) => loess_trend(series, cfg),
    }
}

/// Applies `method` to every series; covariates and campaign metadata are kept.
pub fn fleet_trend(dataset: &FleetDataset, method: &TrendMethod) -> Result<FleetDataset> {
    let series = dataset
        .series
        .par_iter()
        .map(|s| extract_trend(s, method).map_err(|e| e.context(s.label())))
        .collect::<Result<Vec<_>>>()?;
    Ok(FleetDataset {
        series,
        ..dataset.clone()
    })
}

pub fn fleet_window_shifts(dataset: &FleetDataset, window: i64) -> Result<Vec<ShiftRecord>> {
    dataset
        .series
        .par_iter()
        .map(|s| window_shift(s, window).map_err(|e| e.context(s.label())))
        .collect()
}

/// Epoch shifts between two shutdown campaigns, paired by `(device_id, ro_id)`.
pub fn fleet_epoch_shifts(initial: &FleetDataset, last: &FleetDataset) -> Result<Vec<ShiftRecord>> {
    use std::collections::HashMap;
    let index: HashMap<_, _> = last.series.iter().map(|s| (s.key(), s)).collect();
    initial
        .series
        .iter()
        .map(|s| {
            let other = index
                .get(&s.key())
                .ok_or_else(|| Error::IdentityMismatch(format!("{} missing from final epoch", s.label())))?;
            epoch_shift(s, other)
        })
        .collect()
}
