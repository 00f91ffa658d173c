use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{median, FleetDataset, FrequencySeries};

/// Ordinary least squares of frequency on the sample index.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressionResult {
    /// Hz per sample.
    pub slope: f64,
    /// Hz at sample index 0.
    pub intercept: f64,
    pub r2: f64,
}

pub fn fit_linear_values(y: &[f64]) -> Result<RegressionResult> {
    let n = y.len();
    if n < 2 {
        return Err(Error::SeriesTooShort(format!(
            "linear fit needs at least 2 samples, got {n}"
        )));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite sample in linear fit".into()));
    }
    let x_mean = (n - 1) as f64 / 2.0;
    let y_mean = y.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, &v) in y.iter().enumerate() {
        let dx = i as f64 - x_mean;
        sxy += dx * (v - y_mean);
        sxx += dx * dx;
    }
    let slope = sxy / sxx;
    let intercept = y_mean - slope * x_mean;
    let (mut ss_res, mut ss_tot) = (0.0, 0.0);
    for (i, &v) in y.iter().enumerate() {
        let r = v - (intercept + slope * i as f64);
        ss_res += r * r;
        ss_tot += (v - y_mean) * (v - y_mean);
    }
    // a constant series is fitted perfectly
    let r2 = if ss_tot > 0.0 {
        (1.0 - ss_res / ss_tot).clamp(0.0, 1.0)
    } else {
        1.0
    };
    Ok(RegressionResult { slope, intercept, r2 })
}

pub fn fit_linear(series: &FrequencySeries) -> Result<RegressionResult> {
    fit_linear_values(&series.frequencies)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeSummary {
    pub slopes: Vec<f64>,
    pub share_negative: f64,
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
}

/// Slopes of every series of the fleet, in dataset order.
pub fn fleet_slopes(dataset: &FleetDataset) -> Result<SlopeSummary> {
    let slopes = dataset
        .series
        .par_iter()
        .map(|s| fit_linear(s).map(|r| r.slope).map_err(|e| e.context(s.label())))
        .collect::<Result<Vec<_>>>()?;
    let share_negative = slopes.iter().filter(|&&s| s < 0.0).count() as f64 / slopes.len().max(1) as f64;
    Ok(SlopeSummary {
        share_negative,
        median: median(&slopes)?,
        q25: crate::model::quantile(&slopes, 0.25)?,
        q75: crate::model::quantile(&slopes, 0.75)?,
        slopes,
    })
}
