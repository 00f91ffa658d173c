//! Point forecasters for trend series: theta, lagged linear regression and
//! naive/drift baselines, plus a seeded random hyperparameter search.

mod lag;
mod search;
mod theta;

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CovariateSeries, FrequencySeries};

pub use lag::{lag_regression_fit, lag_regression_forecast, lag_regression_values, LagModel, LagRegressionConfig};
pub use search::{random_search, ModelFamily, SearchResult, Trial, VALIDATION_SHARE};
pub use theta::{theta_fit, theta_forecast, theta_values, ThetaConfig, ThetaFit, MIN_THETA_SAMPLES};

/// A model and its hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum ModelSpec {
    Naive,
    Drift,
    Theta(ThetaConfig),
    LagRegression(LagRegressionConfig),
}

impl ModelSpec {
    pub fn name(&self) -> &'static str {
        match self {
            ModelSpec::Naive => "naive",
            ModelSpec::Drift => "drift",
            ModelSpec::Theta(_) => "theta",
            ModelSpec::LagRegression(_) => "lag_regression",
        }
    }

    pub fn uses_covariates(&self) -> bool {
        matches!(self, ModelSpec::LagRegression(c) if c.use_covariates)
    }

    /// Forecasts `horizon` steps past the end of `values`.
    pub fn forecast_values(&self, values: &[f64], covariates: &[Vec<f64>], horizon: usize) -> Result<Vec<f64>> {
        match self {
            ModelSpec::Naive => naive_values(values, horizon),
            ModelSpec::Drift => drift_values(values, horizon),
            ModelSpec::Theta(cfg) => theta_values(values, horizon, cfg).map(|(v, _)| v),
            ModelSpec::LagRegression(cfg) => lag_regression_values(values, covariates, cfg, horizon),
        }
    }
}

/// A fitted-and-extrapolated forecast.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forecast {
    pub model: ModelSpec,
    pub horizon: usize,
    pub values: Vec<f64>,
}

/// Anything that can forecast from a window of a series.
pub trait Forecaster: Sync {
    fn name(&self) -> String;

    /// Predicts the `horizon` samples following `window` using only
    /// information up to the window's end.
    fn forecast_window(
        &self,
        series: &FrequencySeries,
        window: Range<usize>,
        covariates: &[CovariateSeries],
        horizon: usize,
    ) -> Result<Vec<f64>>;
}

impl Forecaster for ModelSpec {
    fn name(&self) -> String {
        self.name().to_string()
    }

    fn forecast_window(
        &self,
        series: &FrequencySeries,
        window: Range<usize>,
        covariates: &[CovariateSeries],
        horizon: usize,
    ) -> Result<Vec<f64>> {
        let aligned = if self.uses_covariates() {
            align_covariates(&series.timestamps[window.clone()], covariates)?
        } else {
            Vec::new()
        };
        self.forecast_values(&series.frequencies[window], &aligned, horizon)
    }
}

/// Samples each covariate at the given instants, taking the latest value at
/// or before each instant (the first value before the covariate starts).
/// Covariates are ordered by name.
pub fn align_covariates(timestamps: &[i64], covariates: &[CovariateSeries]) -> Result<Vec<Vec<f64>>> {
    if covariates.is_empty() {
        return Err(Error::invalid(
            "covariates",
            "model uses covariates but none were supplied",
        ));
    }
    let mut sorted: Vec<&CovariateSeries> = covariates.iter().collect();
    sorted.sort_by(|a, b| a.name.cmp(&b.name));
    sorted
        .into_iter()
        .map(|c| {
            let first = *c
                .values
                .first()
                .ok_or_else(|| Error::SeriesTooShort(format!("covariate `{}` has no samples", c.name)))?;
            Ok(timestamps
                .iter()
                .map(|&t| c.value_at_or_before(t).unwrap_or(first))
                .collect())
        })
        .collect()
}

fn check_values(values: &[f64], min: usize, model: &str) -> Result<()> {
    if values.len() < min {
        return Err(Error::SeriesTooShort(format!(
            "{model} needs at least {min} samples, got {}",
            values.len()
        )));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical(format!("non-finite input to {model}")));
    }
    Ok(())
}

pub fn naive_values(values: &[f64], horizon: usize) -> Result<Vec<f64>> {
    check_values(values, 2, "naive")?;
    Ok(vec![values[values.len() - 1]; horizon])
}

/// Extends the line through the first and last samples.
pub fn drift_values(values: &[f64], horizon: usize) -> Result<Vec<f64>> {
    check_values(values, 2, "drift")?;
    let last = values[values.len() - 1];
    let slope = (last - values[0]) / (values.len() - 1) as f64;
    Ok((1..=horizon).map(|h| last + slope * h as f64).collect())
}

/// Naive and drift forecasts of a series.
pub fn naive_and_drift(series: &FrequencySeries, horizon: usize) -> Result<(Forecast, Forecast)> {
    Ok((
        Forecast {
            model: ModelSpec::Naive,
            horizon,
            values: naive_values(&series.frequencies, horizon)?,
        },
        Forecast {
            model: ModelSpec::Drift,
            horizon,
            values: drift_values(&series.frequencies, horizon)?,
        },
    ))
}
