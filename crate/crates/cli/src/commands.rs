//! The pipeline steps. Each reads its inputs from the output directory (or
//! the configured input files), writes its artifacts there and returns a
//! one-line description of what it did.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use roage_core::backtest::{fleet_backtest_runs, summarize_fleet, BacktestConfig, Histogram};
use roage_core::forecast::{align_covariates, random_search, ModelSpec, SearchResult};
use roage_core::model::{quantile, SECONDS_PER_DAY};
use roage_core::sim::{drawn_shifts, simulate_covariates, simulate_fleet, simulate_shutdowns, FleetSpec};
use roage_core::spatial::{interpolate, location_medians, MapSummary};
use roage_core::stats::{
    device_shifts, fleet_slopes, fleet_trend_test, modified_z_scores, outlier_share_curve, DeviceScore, ScaleEstimate,
    SharePoint,
};
use roage_core::trend::{
    epoch_shift, fleet_trend, fleet_window_shifts, half_life_in_samples, EwmaConfig, LoessConfig, ShiftRecord,
    TrendMethod,
};
use roage_core::{median, Campaign, FleetDataset, FrequencySeries};
use serde::{Deserialize, Serialize};

use crate::config::{RunConfig, TrendKind};
use crate::error::CliError;
use crate::io::{self, format_time};

pub const MEASUREMENTS: &str = "measurements.csv";
pub const COVARIATES: &str = "covariates.csv";
pub const SIMULATE_JSON: &str = "simulate.json";
pub const TREND_CSV: &str = "trend.csv";
pub const TREND_JSON: &str = "trend.json";
pub const SHIFTS_CSV: &str = "shifts.csv";
pub const SHIFT_JSON: &str = "shift.json";
pub const OUTLIERS_CSV: &str = "outliers.csv";
pub const OUTLIERS_JSON: &str = "outliers.json";
pub const MAP_CSV: &str = "map.csv";
pub const MAP_JSON: &str = "map.json";
pub const TRENDTEST_CSV: &str = "trendtest.csv";
pub const TRENDTEST_JSON: &str = "trendtest.json";
pub const FORECAST_CSV: &str = "forecast.csv";
pub const FORECAST_JSON: &str = "forecast.json";
pub const BACKTEST_CSV: &str = "backtest.csv";
pub const BACKTEST_FORECASTS_CSV: &str = "backtest_forecasts.csv";
pub const BACKTEST_JSON: &str = "backtest.json";
pub const REPORT_JSON: &str = "report.json";

/// Where a run reads and writes, plus a sink for warnings.
pub struct Context<'a> {
    pub config: &'a RunConfig,
    pub out: PathBuf,
    pub warn: &'a dyn Fn(&str),
}

impl Context<'_> {
    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn measurements_path(&self) -> PathBuf {
        self.config
            .input
            .measurements
            .clone()
            .unwrap_or_else(|| self.path(MEASUREMENTS))
    }

    fn covariates_path(&self) -> PathBuf {
        self.config
            .input
            .covariates
            .clone()
            .unwrap_or_else(|| self.path(COVARIATES))
    }

    /// Path of an upstream artifact, or an error naming the step that makes it.
    fn upstream(&self, path: PathBuf, step: &str) -> Result<PathBuf, CliError> {
        if path.is_file() {
            Ok(path)
        } else {
            Err(CliError::missing(&path, step))
        }
    }

    fn ingest(&self, path: &Path, covariates: Option<&Path>, campaign: Campaign) -> Result<FleetDataset, CliError> {
        let ingested = io::ingest(path, covariates, campaign, self.config.resample)?;
        for w in &ingested.warnings {
            (self.warn)(w);
        }
        Ok(ingested.dataset)
    }

    fn require_continuous(&self, step: &str) -> Result<(), CliError> {
        if self.config.campaign != Campaign::Continuous {
            return Err(CliError::Data(format!("`{step}` needs a continuous campaign")));
        }
        Ok(())
    }

    fn trend_dataset(&self, with_covariates: bool) -> Result<FleetDataset, CliError> {
        let trend = self.upstream(self.path(TREND_CSV), "trend")?;
        let cov = if with_covariates {
            Some(self.upstream(self.covariates_path(), "simulate")?)
        } else {
            None
        };
        self.ingest(&trend, cov.as_deref(), Campaign::Continuous)
    }
}

fn days_to_seconds(days: f64, name: &str) -> Result<i64, CliError> {
    let secs = days * SECONDS_PER_DAY as f64;
    if !(secs >= 1.0) || !secs.is_finite() || (secs - secs.round()).abs() > 1e-6 {
        return Err(CliError::Usage(format!(
            "{name} must be a positive whole number of seconds, got {days} days"
        )));
    }
    Ok(secs.round() as i64)
}

fn summary_stats(values: &[f64]) -> Result<Quartiles, CliError> {
    Ok(Quartiles {
        median: median(values)?,
        q25: quantile(values, 0.25)?,
        q75: quantile(values, 0.75)?,
        min: values.iter().copied().fold(f64::INFINITY, f64::min),
        max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Quartiles {
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
    pub min: f64,
    pub max: f64,
}

// ---------------------------------------------------------------- simulate

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateSummary {
    pub campaign: Campaign,
    pub series: usize,
    pub samples: usize,
    /// Configured median total shift.
    pub configured_shift: f64,
    /// Median of the per-oscillator shifts actually drawn.
    pub drawn_median_shift: f64,
    pub fleet: FleetSpec,
}

pub fn fleet_spec(cfg: &RunConfig, seed: u64) -> Result<FleetSpec, CliError> {
    let s = &cfg.simulate;
    let mut spec = match (&s.fleet, cfg.campaign) {
        (Some(f), _) => f.clone(),
        (None, Campaign::Continuous) => FleetSpec::reference_continuous(s.devices, seed)?,
        (None, Campaign::Shutdown) => FleetSpec::reference_shutdown(s.devices, seed),
    };
    spec.seed = seed;
    spec.anomalies.extend(s.anomalies.iter().cloned());
    if let Some(field) = &s.spatial_field {
        spec.profile.spatial_field = Some(field.clone());
    }
    Ok(spec)
}

pub fn simulate(ctx: &Context) -> Result<String, CliError> {
    let cfg = ctx.config;
    let seed = cfg.require_seed("simulate")?;
    let spec = fleet_spec(cfg, seed)?;
    let series = match cfg.campaign {
        Campaign::Continuous => {
            let fleet = simulate_fleet(&spec)?;
            if cfg.simulate.covariates {
                io::write_covariates(&ctx.path(COVARIATES), &simulate_covariates(&fleet, seed)?)?;
            }
            fleet.series
        }
        Campaign::Shutdown => {
            let (initial, last) = simulate_shutdowns(&spec, cfg.simulate.repeats)?;
            initial
                .series
                .into_iter()
                .zip(last.series)
                .map(|(mut a, b)| {
                    a.timestamps.extend(b.timestamps);
                    a.frequencies.extend(b.frequencies);
                    a
                })
                .collect()
        }
    };
    io::write_measurements(&ctx.path(MEASUREMENTS), &series)?;
    let drawn: Vec<f64> = drawn_shifts(&spec)?.into_iter().map(|d| d.2).collect();
    let summary = SimulateSummary {
        campaign: cfg.campaign,
        series: series.len(),
        samples: series.iter().map(|s| s.len()).sum(),
        configured_shift: spec.profile.total_shift,
        drawn_median_shift: median(&drawn)?,
        fleet: spec,
    };
    io::write_json(&ctx.path(SIMULATE_JSON), &summary)?;
    Ok(format!(
        "simulated {} series ({} samples) into {}",
        summary.series,
        summary.samples,
        ctx.path(MEASUREMENTS).display()
    ))
}

// ---------------------------------------------------------------- trend

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendSummary {
    pub method: TrendMethod,
    pub sample_period: i64,
    pub series: usize,
}

pub fn trend(ctx: &Context) -> Result<String, CliError> {
    ctx.require_continuous("trend")?;
    let input = ctx.upstream(ctx.measurements_path(), "simulate")?;
    let data = ctx.ingest(&input, None, Campaign::Continuous)?;
    let period = data.require_continuous()?;
    let t = &ctx.config.trend;
    let method = match t.method {
        TrendKind::Ewma => {
            let half_life = days_to_seconds(t.half_life_days, "half-life")?;
            TrendMethod::Ewma(EwmaConfig::new(half_life_in_samples(half_life, period)?))
        }
        TrendKind::Loess => TrendMethod::Loess(LoessConfig::new(t.loess_span)),
    };
    let trend = fleet_trend(&data, &method)?;
    io::write_measurements(&ctx.path(TREND_CSV), &trend.series)?;
    let summary = TrendSummary {
        method,
        sample_period: period,
        series: trend.series.len(),
    };
    io::write_json(&ctx.path(TREND_JSON), &summary)?;
    Ok(format!("extracted {} trends", summary.series))
}

// ---------------------------------------------------------------- shift

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftSummary {
    pub campaign: Campaign,
    /// Continuous campaigns only.
    pub window_days: Option<f64>,
    pub count: usize,
    pub median_shift: f64,
    pub median_shift_percent: f64,
    pub distribution: Quartiles,
}

/// Splits a shutdown series at its largest timestamp gap.
pub fn split_epochs(series: &FrequencySeries) -> Result<(FrequencySeries, FrequencySeries), CliError> {
    let gap = series
        .timestamps
        .windows(2)
        .enumerate()
        .max_by(|a, b| (a.1[1] - a.1[0]).cmp(&(b.1[1] - b.1[0])).then(b.0.cmp(&a.0)))
        .map(|(i, _)| i + 1)
        .ok_or_else(|| CliError::Data(format!("{}: a shutdown series needs two epochs", series.label())))?;
    let part = |r: std::ops::Range<usize>| {
        FrequencySeries::new(
            series.device_id.clone(),
            series.ro_id.clone(),
            series.location,
            series.timestamps[r.clone()].to_vec(),
            series.frequencies[r].to_vec(),
        )
    };
    Ok((part(0..gap), part(gap..series.len())))
}

pub fn shift(ctx: &Context) -> Result<String, CliError> {
    let cfg = ctx.config;
    let (records, window_days) = match cfg.campaign {
        Campaign::Continuous => {
            let trend = ctx.trend_dataset(false)?;
            let window = days_to_seconds(cfg.shift.window_days, "shift window")?;
            (fleet_window_shifts(&trend, window)?, Some(cfg.shift.window_days))
        }
        Campaign::Shutdown => {
            let input = ctx.upstream(ctx.measurements_path(), "simulate")?;
            let data = ctx.ingest(&input, None, Campaign::Shutdown)?;
            let records = data
                .series
                .par_iter()
                .map(|s| {
                    let (a, b) = split_epochs(s)?;
                    epoch_shift(&a, &b).map_err(CliError::from)
                })
                .collect::<Result<Vec<_>, _>>()?;
            (records, None)
        }
    };
    io::write_shifts(&ctx.path(SHIFTS_CSV), &records)?;
    let deltas: Vec<f64> = records.iter().map(|r| r.delta).collect();
    let distribution = summary_stats(&deltas)?;
    let summary = ShiftSummary {
        campaign: cfg.campaign,
        window_days,
        count: records.len(),
        median_shift: distribution.median,
        median_shift_percent: 100.0 * distribution.median,
        distribution,
    };
    io::write_json(&ctx.path(SHIFT_JSON), &summary)?;
    Ok(format!(
        "median shift {:.5}% over {} oscillators",
        summary.median_shift_percent, summary.count
    ))
}

fn shift_records(ctx: &Context) -> Result<Vec<ShiftRecord>, CliError> {
    io::read_shifts(&ctx.upstream(ctx.path(SHIFTS_CSV), "shift")?)
}

// ---------------------------------------------------------------- outliers

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutlierSummary {
    pub threshold: f64,
    pub fleet_median: f64,
    pub mad: f64,
    pub scale: ScaleEstimate,
    pub flagged: Vec<String>,
    pub devices: Vec<DeviceScore>,
    pub share_curve: Vec<SharePoint>,
}

pub fn outliers(ctx: &Context) -> Result<String, CliError> {
    let records = shift_records(ctx)?;
    let settings = &ctx.config.outliers;
    let report = modified_z_scores(&device_shifts(&records), settings.threshold)?;
    let summary = OutlierSummary {
        threshold: report.threshold,
        fleet_median: report.fleet_median,
        mad: report.mad,
        scale: report.scale,
        flagged: report.flagged().map(|d| d.device_id.clone()).collect(),
        share_curve: outlier_share_curve(&report, &settings.share_thresholds),
        devices: report.devices,
    };
    io::write_rows(
        &ctx.path(OUTLIERS_CSV),
        &["device_id", "median_shift", "z", "flagged"],
        summary.devices.iter().map(|d| {
            [
                d.device_id.clone(),
                d.median_shift.to_string(),
                d.z.to_string(),
                d.flagged.to_string(),
            ]
        }),
    )?;
    io::write_json(&ctx.path(OUTLIERS_JSON), &summary)?;
    Ok(format!(
        "{} of {} devices flagged at |z| > {}",
        summary.flagged.len(),
        summary.devices.len(),
        summary.threshold
    ))
}

// ---------------------------------------------------------------- map

pub fn map(ctx: &Context) -> Result<String, CliError> {
    let records = shift_records(ctx)?;
    let sources = location_medians(&records)?;
    let map = interpolate(&sources, ctx.config.map.resolution)?;
    io::write_rows(
        &ctx.path(MAP_CSV),
        &["x", "y", "value"],
        map.points()
            .map(|p| [p.x.to_string(), p.y.to_string(), p.value.to_string()]),
    )?;
    let summary: MapSummary = map.summary();
    io::write_json(&ctx.path(MAP_JSON), &summary)?;
    Ok(format!(
        "map minimum {:.5}% at (X={}; Y={})",
        100.0 * summary.hotspot.value,
        summary.hotspot.x,
        summary.hotspot.y
    ))
}

// ---------------------------------------------------------------- trendtest

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeStats {
    /// Hz per sample.
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
    pub share_negative: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendTestSummary {
    pub alpha: f64,
    pub series: usize,
    pub retained: usize,
    pub discarded_fraction: f64,
    pub median_tau: Option<f64>,
    pub tau_histogram: Histogram,
    pub slopes: SlopeStats,
}

pub fn trendtest(ctx: &Context) -> Result<String, CliError> {
    let trend = ctx.trend_dataset(false)?;
    let alpha = ctx.config.trendtest.alpha;
    let test = fleet_trend_test(&trend, alpha)?;
    let slopes = fleet_slopes(&trend)?;
    io::write_rows(
        &ctx.path(TRENDTEST_CSV),
        &[
            "device_id",
            "ro_id",
            "tau",
            "p_value",
            "significant",
            "slope_hz_per_sample",
        ],
        test.per_series.iter().zip(&slopes.slopes).map(|(s, slope)| {
            [
                s.device_id.clone(),
                s.ro_id.clone(),
                s.tau.to_string(),
                s.p_value.to_string(),
                s.significant.to_string(),
                slope.to_string(),
            ]
        }),
    )?;
    let summary = TrendTestSummary {
        alpha,
        series: test.per_series.len(),
        retained: test.retained_taus.len(),
        discarded_fraction: test.discarded_fraction,
        median_tau: test.median_tau,
        tau_histogram: roage_core::backtest::histogram(&test.retained_taus, 20),
        slopes: SlopeStats {
            median: slopes.median,
            q25: slopes.q25,
            q75: slopes.q75,
            share_negative: slopes.share_negative,
        },
    };
    io::write_json(&ctx.path(TRENDTEST_JSON), &summary)?;
    Ok(match summary.median_tau {
        Some(tau) => format!(
            "median tau {tau:.3}, {:.2}% of series discarded",
            100.0 * summary.discarded_fraction
        ),
        None => "no significant trends".to_string(),
    })
}

// ---------------------------------------------------------------- forecast

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesForecast {
    pub device_id: String,
    pub ro_id: String,
    pub model: ModelSpec,
    /// Validation MAPE of the selected model when it was searched.
    pub validation_mape: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastSummary {
    pub horizon_days: f64,
    pub horizon_samples: usize,
    pub series: Vec<SeriesForecast>,
}

pub fn forecast(ctx: &Context) -> Result<String, CliError> {
    let settings = &ctx.config.forecast;
    let seed = match settings.search {
        Some(_) => Some(ctx.config.require_seed("forecast search")?),
        None => None,
    };
    let needs_cov = settings.model.uses_covariates()
        || matches!(&settings.search, Some(s) if matches!(s.family, roage_core::forecast::ModelFamily::LagRegression { allow_covariates: true, .. }));
    let trend = ctx.trend_dataset(needs_cov)?;
    let period = trend.require_continuous()?;
    let horizon_secs = days_to_seconds(settings.horizon_days, "horizon")?;
    if horizon_secs % period != 0 {
        return Err(CliError::Usage(format!(
            "horizon of {} days is not a whole number of {period} s samples",
            settings.horizon_days
        )));
    }
    let horizon = (horizon_secs / period) as usize;
    let results = trend
        .series
        .par_iter()
        .map(|s| -> Result<(SeriesForecast, Vec<f64>), CliError> {
            let covariates: Vec<_> = trend.covariates_of(&s.device_id).cloned().collect();
            let aligned = if needs_cov {
                align_covariates(&s.timestamps, &covariates)?
            } else {
                Vec::new()
            };
            let (model, validation_mape) = match (&settings.search, seed) {
                (Some(search), Some(seed)) => {
                    let SearchResult { best, best_mape, .. } =
                        random_search(&search.family, &s.frequencies, &aligned, search.budget, seed)
                            .map_err(|e| e.context(s.label()))?;
                    (best, Some(best_mape))
                }
                _ => (settings.model.clone(), None),
            };
            let values = model
                .forecast_values(&s.frequencies, &aligned, horizon)
                .map_err(|e| e.context(s.label()))?;
            Ok((
                SeriesForecast {
                    device_id: s.device_id.clone(),
                    ro_id: s.ro_id.clone(),
                    model,
                    validation_mape,
                },
                values,
            ))
        })
        .collect::<Result<Vec<_>, _>>()?;
    io::write_rows(
        &ctx.path(FORECAST_CSV),
        &["device_id", "ro_id", "timestamp", "predicted"],
        trend.series.iter().zip(&results).flat_map(|(s, (_, values))| {
            let last = *s.timestamps.last().expect("validated series are non-empty");
            values.iter().enumerate().map(move |(k, v)| {
                [
                    s.device_id.clone(),
                    s.ro_id.clone(),
                    format_time(last + (k as i64 + 1) * period),
                    v.to_string(),
                ]
            })
        }),
    )?;
    let summary = ForecastSummary {
        horizon_days: settings.horizon_days,
        horizon_samples: horizon,
        series: results.into_iter().map(|r| r.0).collect(),
    };
    io::write_json(&ctx.path(FORECAST_JSON), &summary)?;
    Ok(format!(
        "forecast {} series {} days ahead",
        summary.series.len(),
        summary.horizon_days
    ))
}

// ---------------------------------------------------------------- backtest

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestSummary {
    pub config: BacktestConfig,
    pub series: usize,
    pub median_mape: f64,
    pub q25: f64,
    pub q75: f64,
    pub iqr: f64,
    pub skewness: f64,
    pub histogram: Histogram,
    /// Days spanned by the scored targets of the shortest historical forecast.
    pub comparison_window_days: f64,
}

pub fn backtest(ctx: &Context) -> Result<String, CliError> {
    let cfg = &ctx.config.backtest;
    let trend = ctx.trend_dataset(cfg.model.uses_covariates())?;
    let runs = fleet_backtest_runs(&trend, cfg)?;
    let fleet = summarize_fleet(cfg, &runs)?;
    io::write_rows(
        &ctx.path(BACKTEST_CSV),
        &["device_id", "ro_id", "mape_percent"],
        fleet
            .per_series
            .iter()
            .map(|s| [s.device_id.clone(), s.ro_id.clone(), s.mape.to_string()]),
    )?;
    io::write_rows(
        &ctx.path(BACKTEST_FORECASTS_CSV),
        &["device_id", "ro_id", "timestamp", "actual", "predicted"],
        runs.iter().flat_map(|r| {
            r.historical_forecast.iter().map(move |p| {
                [
                    r.device_id.clone(),
                    r.ro_id.clone(),
                    format_time(p.timestamp),
                    p.actual.to_string(),
                    p.predicted.to_string(),
                ]
            })
        }),
    )?;
    let summary = BacktestSummary {
        config: cfg.clone(),
        series: runs.len(),
        median_mape: fleet.median,
        q25: fleet.q25,
        q75: fleet.q75,
        iqr: fleet.q75 - fleet.q25,
        skewness: fleet.skewness,
        histogram: fleet.histogram,
        comparison_window_days: runs
            .iter()
            .map(|r| r.comparison_window_days)
            .fold(f64::INFINITY, f64::min),
    };
    io::write_json(&ctx.path(BACKTEST_JSON), &summary)?;
    Ok(format!(
        "median MAPE {:.5}% (IQR {:.5}%) over {} series",
        summary.median_mape, summary.iqr, summary.series
    ))
}

// ---------------------------------------------------------------- report

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftSection {
    pub median_shift_percent: f64,
    pub configured_shift_percent: Option<f64>,
    pub oscillators: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutlierSection {
    pub threshold: f64,
    pub flagged: Vec<String>,
    pub devices: usize,
    /// Most extreme score, by magnitude.
    pub max_abs_z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendSection {
    pub median_tau: Option<f64>,
    pub discarded_percent: f64,
    pub negative_slope_percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestSection {
    pub model: String,
    pub median_mape_percent: f64,
    pub iqr_percent: f64,
    pub skewness: f64,
}

/// Headline statistics of whichever analyses have been run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub shift: Option<ShiftSection>,
    pub outliers: Option<OutlierSection>,
    pub trend: Option<TrendSection>,
    pub backtest: Option<BacktestSection>,
    /// Artifacts the report was assembled from.
    pub sources: Vec<String>,
}

pub fn report(ctx: &Context) -> Result<String, CliError> {
    let mut sources = Vec::new();
    let mut load = |name: &str| -> Option<PathBuf> {
        let p = ctx.path(name);
        p.is_file().then(|| {
            sources.push(name.to_string());
            p
        })
    };
    let shift_path = load(SHIFT_JSON);
    let sim_path = load(SIMULATE_JSON);
    let outlier_path = load(OUTLIERS_JSON);
    let trend_path = load(TRENDTEST_JSON);
    let backtest_path = load(BACKTEST_JSON);
    if shift_path.is_none() && outlier_path.is_none() && trend_path.is_none() && backtest_path.is_none() {
        return Err(CliError::Data(format!(
            "no analysis outputs in {}: run `roage shift`, `roage outliers`, `roage trendtest` or `roage backtest` first",
            ctx.out.display()
        )));
    }
    let configured = sim_path
        .map(|p| io::read_json::<SimulateSummary>(&p))
        .transpose()?
        .map(|s| 100.0 * s.configured_shift);
    let shift = shift_path
        .map(|p| io::read_json::<ShiftSummary>(&p))
        .transpose()?
        .map(|s| ShiftSection {
            median_shift_percent: s.median_shift_percent,
            configured_shift_percent: configured,
            oscillators: s.count,
        });
    let outliers = outlier_path
        .map(|p| io::read_json::<OutlierSummary>(&p))
        .transpose()?
        .map(|o| OutlierSection {
            threshold: o.threshold,
            max_abs_z: o.devices.iter().map(|d| d.z.abs()).fold(0.0, f64::max),
            devices: o.devices.len(),
            flagged: o.flagged,
        });
    let trend = trend_path
        .map(|p| io::read_json::<TrendTestSummary>(&p))
        .transpose()?
        .map(|t| TrendSection {
            median_tau: t.median_tau,
            discarded_percent: 100.0 * t.discarded_fraction,
            negative_slope_percent: 100.0 * t.slopes.share_negative,
        });
    let backtest = backtest_path
        .map(|p| io::read_json::<BacktestSummary>(&p))
        .transpose()?
        .map(|b| BacktestSection {
            model: b.config.model.name().to_string(),
            median_mape_percent: b.median_mape,
            iqr_percent: b.iqr,
            skewness: b.skewness,
        });
    let report = Report {
        shift,
        outliers,
        trend,
        backtest,
        sources,
    };
    io::write_json(&ctx.path(REPORT_JSON), &report)?;
    Ok(format!("report assembled from {}", report.sources.join(", ")))
}
