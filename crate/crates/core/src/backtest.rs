//! Forward-chaining evaluation of forecasters.
//!
//! Each roll trains on data ending `H` before a target sample and records the
//! `H`-step-ahead prediction for that target. The targets form the historical
//! forecast, which is scored with MAPE.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forecast::{Forecaster, ModelSpec};
use crate::model::{quantile, CovariateSeries, FleetDataset, FrequencySeries, Timestamp, SECONDS_PER_DAY};

/// Length of the historical forecast, `T − (L + H)`, in the units of the inputs.
pub fn historical_forecast_length(total: f64, train: f64, horizon: f64) -> Result<f64> {
    if !(total > train + horizon) {
        return Err(Error::NoEvaluableWindow {
            total,
            needed: train + horizon,
        });
    }
    Ok(total - (train + horizon))
}

/// Mean absolute percentage error, in percent.
pub fn mape(actual: &[f64], predicted: &[f64]) -> Result<f64> {
    if actual.len() != predicted.len() {
        return Err(Error::LengthMismatch {
            left: actual.len(),
            right: predicted.len(),
        });
    }
    if actual.is_empty() {
        return Err(Error::EmptySample);
    }
    let mut sum = 0.0;
    for (index, (y, p)) in actual.iter().zip(predicted).enumerate() {
        if *y == 0.0 {
            return Err(Error::MapeUndefinedAtZero { index });
        }
        sum += ((y - p) / y).abs();
    }
    let m = 100.0 * sum / actual.len() as f64;
    if m.is_finite() {
        Ok(m)
    } else {
        Err(Error::Numerical("non-finite MAPE".into()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrainingWindow {
    /// The most recent `days` before each forecast origin.
    Fixed { days: f64 },
    /// All data up to the forecast origin; the first roll sees `initial_days`.
    Expanding { initial_days: f64 },
}

impl TrainingWindow {
    pub fn days(&self) -> f64 {
        match *self {
            TrainingWindow::Fixed { days } => days,
            TrainingWindow::Expanding { initial_days } => initial_days,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
pub struct BacktestConfig {
    pub window: TrainingWindow,
    pub horizon_days: f64,
    /// Samples between successive targets.
    #[serde(default = "default_step")]
    pub step: usize,
    pub model: ModelSpec,
    /// Only targets in the final `score_days` of the series are forecast and scored.
    #[serde(default)]
    pub score_days: Option<f64>,
}

fn default_step() -> usize {
    1
}

impl BacktestConfig {
    pub fn new(window: TrainingWindow, horizon_days: f64, model: ModelSpec) -> Self {
        Self {
            window,
            horizon_days,
            step: 1,
            model,
            score_days: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForecastPoint {
    pub timestamp: Timestamp,
    pub actual: f64,
    pub predicted: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestMetrics {
    pub device_id: String,
    pub ro_id: String,
    pub model: String,
    pub historical_forecast: Vec<ForecastPoint>,
    pub mape: f64,
    /// Time spanned by the scored targets, days.
    pub comparison_window_days: f64,
}

fn to_samples(days: f64, period: i64, name: &'static str) -> Result<usize> {
    if !(days >= 0.0) || !days.is_finite() {
        return Err(Error::invalid(name, "must be a finite, non-negative number of days"));
    }
    let samples = days * SECONDS_PER_DAY as f64 / period as f64;
    let rounded = samples.round();
    if (samples - rounded).abs() > 1e-6 {
        return Err(Error::invalid(
            name,
            format!("{days} days is not a whole number of samples"),
        ));
    }
    Ok(rounded as usize)
}

fn span_days(points: &[ForecastPoint]) -> f64 {
    match (points.first(), points.last()) {
        (Some(a), Some(b)) => (b.timestamp - a.timestamp) as f64 / SECONDS_PER_DAY as f64,
        _ => 0.0,
    }
}

/// Backtests a forecaster on a regularly sampled series.
pub fn backtest_with(
    series: &FrequencySeries,
    forecaster: &dyn Forecaster,
    cfg: &BacktestConfig,
    sample_period: i64,
    covariates: &[CovariateSeries],
) -> Result<BacktestMetrics> {
    if cfg.step == 0 {
        return Err(Error::invalid("step", "must be at least 1"));
    }
    if sample_period <= 0 {
        return Err(Error::invalid("sample_period", "must be positive"));
    }
    let train = to_samples(cfg.window.days(), sample_period, "training window")?;
    let horizon = to_samples(cfg.horizon_days, sample_period, "horizon")?;
    if horizon == 0 {
        return Err(Error::invalid("horizon", "must be at least one sample"));
    }
    let n = series.len();
    let total_days = series.span() as f64 / SECONDS_PER_DAY as f64;
    historical_forecast_length(total_days, cfg.window.days(), cfg.horizon_days)?;
    let first_target = train + horizon;
    if first_target >= n {
        return Err(Error::NoEvaluableWindow {
            total: total_days,
            needed: cfg.window.days() + cfg.horizon_days,
        });
    }
    let mut targets: Vec<usize> = (first_target..n).step_by(cfg.step).collect();
    if let Some(days) = cfg.score_days {
        let from = series.timestamps[n - 1] as f64 - days * SECONDS_PER_DAY as f64;
        targets.retain(|&t| series.timestamps[t] as f64 >= from);
    }
    if targets.is_empty() {
        return Err(Error::NoEvaluableWindow {
            total: total_days,
            needed: cfg.window.days() + cfg.horizon_days,
        });
    }

    let mut points = Vec::with_capacity(targets.len());
    for &target in &targets {
        let end = target - horizon + 1;
        let start = match cfg.window {
            TrainingWindow::Fixed { .. } => end - train - 1,
            TrainingWindow::Expanding { .. } => 0,
        };
        let path = forecaster
            .forecast_window(series, start..end, covariates, horizon)
            .map_err(|e| e.context(format!("{} at {}", series.label(), series.timestamps[target])))?;
        let predicted = *path
            .last()
            .ok_or_else(|| Error::Numerical("forecaster returned no values".into()))?;
        points.push(ForecastPoint {
            timestamp: series.timestamps[target],
            actual: series.frequencies[target],
            predicted,
        });
    }
    let actual: Vec<f64> = points.iter().map(|p| p.actual).collect();
    let predicted: Vec<f64> = points.iter().map(|p| p.predicted).collect();
    Ok(BacktestMetrics {
        device_id: series.device_id.clone(),
        ro_id: series.ro_id.clone(),
        model: forecaster.name(),
        mape: mape(&actual, &predicted).map_err(|e| e.context(series.label()))?,
        comparison_window_days: span_days(&points),
        historical_forecast: points,
    })
}

pub fn backtest(
    series: &FrequencySeries,
    cfg: &BacktestConfig,
    sample_period: i64,
    covariates: &[CovariateSeries],
) -> Result<BacktestMetrics> {
    backtest_with(series, &cfg.model, cfg, sample_period, covariates)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub label: String,
    pub mape: f64,
    pub points: usize,
    pub window_days: f64,
}

/// Rescores every result over the targets they all share, which is the
/// shortest historical forecast aligned to the series end when the results
/// come from the same series and stride.
pub fn fair_compare(results: &[(String, BacktestMetrics)]) -> Result<Vec<ComparisonRow>> {
    let first = results.first().ok_or(Error::EmptySample)?;
    let mut common: BTreeSet<Timestamp> = first.1.historical_forecast.iter().map(|p| p.timestamp).collect();
    for (_, r) in &results[1..] {
        if r.device_id != first.1.device_id || r.ro_id != first.1.ro_id {
            return Err(Error::IdentityMismatch(format!(
                "{}/{} vs {}/{}",
                first.1.device_id, first.1.ro_id, r.device_id, r.ro_id
            )));
        }
        let ts: BTreeSet<Timestamp> = r.historical_forecast.iter().map(|p| p.timestamp).collect();
        common = common.intersection(&ts).copied().collect();
    }
    if common.is_empty() {
        return Err(Error::NoEvaluableWindow {
            total: 0.0,
            needed: 0.0,
        }
        .context("historical forecasts do not overlap"));
    }
    results
        .iter()
        .map(|(label, r)| {
            let shared: Vec<ForecastPoint> = r
                .historical_forecast
                .iter()
                .filter(|p| common.contains(&p.timestamp))
                .copied()
                .collect();
            debug_assert!(shared.iter().map(|p| p.timestamp).eq(common.iter().copied()));
            let actual: Vec<f64> = shared.iter().map(|p| p.actual).collect();
            let predicted: Vec<f64> = shared.iter().map(|p| p.predicted).collect();
            Ok(ComparisonRow {
                label: label.clone(),
                mape: mape(&actual, &predicted)?,
                points: shared.len(),
                window_days: span_days(&shared),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// `bins + 1` edges.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

pub fn histogram(values: &[f64], bins: usize) -> Histogram {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if values.is_empty() || bins == 0 {
        return Histogram {
            edges: Vec::new(),
            counts: Vec::new(),
        };
    }
    let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
    let edges = (0..=bins).map(|i| lo + width * i as f64).collect();
    let mut counts = vec![0; bins];
    for v in values {
        let i = (((v - lo) / width) as usize).min(bins - 1);
        counts[i] += 1;
    }
    Histogram { edges, counts }
}

/// Sample skewness `m3 / m2^1.5`; zero for constant samples.
pub fn skewness(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    if values.is_empty() {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / n;
    let m2 = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let m3 = values.iter().map(|v| (v - mean).powi(3)).sum::<f64>() / n;
    if m2 > 0.0 {
        m3 / m2.powf(1.5)
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesMape {
    pub device_id: String,
    pub ro_id: String,
    pub mape: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FleetBacktest {
    pub config: BacktestConfig,
    pub per_series: Vec<SeriesMape>,
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
    pub skewness: f64,
    pub histogram: Histogram,
}

pub const HISTOGRAM_BINS: usize = 20;

/// Backtests every series of a continuous campaign, in dataset order.
pub fn fleet_backtest_runs(dataset: &FleetDataset, cfg: &BacktestConfig) -> Result<Vec<BacktestMetrics>> {
    let period = dataset.require_continuous()?;
    dataset
        .series
        .par_iter()
        .map(|s| {
            let covariates: Vec<CovariateSeries> = if cfg.model.uses_covariates() {
                dataset.covariates_of(&s.device_id).cloned().collect()
            } else {
                Vec::new()
            };
            backtest(s, cfg, period, &covariates)
        })
        .collect()
}

/// Distribution of the per-series MAPEs.
pub fn summarize_fleet(cfg: &BacktestConfig, runs: &[BacktestMetrics]) -> Result<FleetBacktest> {
    let per_series: Vec<SeriesMape> = runs
        .iter()
        .map(|m| SeriesMape {
            device_id: m.device_id.clone(),
            ro_id: m.ro_id.clone(),
            mape: m.mape,
        })
        .collect();
    let mapes: Vec<f64> = per_series.iter().map(|s| s.mape).collect();
    Ok(FleetBacktest {
        config: cfg.clone(),
        median: quantile(&mapes, 0.5)?,
        q25: quantile(&mapes, 0.25)?,
        q75: quantile(&mapes, 0.75)?,
        skewness: skewness(&mapes),
        histogram: histogram(&mapes, HISTOGRAM_BINS),
        per_series,
    })
}

pub fn fleet_backtest(dataset: &FleetDataset, cfg: &BacktestConfig) -> Result<FleetBacktest> {
    summarize_fleet(cfg, &fleet_backtest_runs(dataset, cfg)?)
}
