use serde::{Deserialize, Serialize};

use super::{check_values, Forecast, ModelSpec};
use crate::error::{Error, Result};
use crate::model::FrequencySeries;

pub const MIN_THETA_SAMPLES: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
#[serde(default)]
pub struct ThetaConfig {
    /// Curvature multiplier of the smoothed line, ≥ 1.
    pub theta: f64,
    /// Fixed SES smoothing; searched over a 0.01 grid when absent.
    #[serde(default)]
    pub alpha: Option<f64>,
}

impl Default for ThetaConfig {
    fn default() -> Self {
        Self {
            theta: 2.0,
            alpha: None,
        }
    }
}

/// Fitted components; `a` and `ses_level` are relative to the first sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThetaFit {
    pub a: f64,
    pub b: f64,
    pub ses_alpha: f64,
    pub ses_level: f64,
}

fn ses_sse(q: &[f64], alpha: f64) -> (f64, f64) {
    let mut level = q[0];
    let mut sse = 0.0;
    for &v in &q[1..] {
        let e = v - level;
        sse += e * e;
        level += alpha * e;
    }
    (sse, level)
}

/// Fits on `values − values[0]`.
pub fn theta_fit(values: &[f64], cfg: &ThetaConfig) -> Result<ThetaFit> {
    check_values(values, MIN_THETA_SAMPLES, "theta")?;
    if !(cfg.theta >= 1.0) || !cfg.theta.is_finite() {
        return Err(Error::invalid("theta", "must be finite and at least 1"));
    }
    if let Some(a) = cfg.alpha {
        if !(0.01..=0.99).contains(&a) {
            return Err(Error::invalid("alpha", "must lie in [0.01, 0.99]"));
        }
    }
    let base = values[0];
    let x: Vec<f64> = values.iter().map(|v| v - base).collect();
    let n = x.len() as f64;
    let t_mean = (n - 1.0) / 2.0;
    let x_mean = x.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, v) in x.iter().enumerate() {
        let dt = i as f64 - t_mean;
        sxy += dt * (v - x_mean);
        sxx += dt * dt;
    }
    let b = sxy / sxx;
    let a = x_mean - b * t_mean;
    let q: Vec<f64> = x
        .iter()
        .enumerate()
        .map(|(i, v)| cfg.theta * v + (1.0 - cfg.theta) * (a + b * i as f64))
        .collect();

    let ses_alpha = match cfg.alpha {
        Some(alpha) => alpha,
        None => {
            let mut best = (f64::INFINITY, 0.01);
            for k in 1..=99 {
                let alpha = k as f64 / 100.0;
                let (sse, _) = ses_sse(&q, alpha);
                if sse < best.0 {
                    best = (sse, alpha);
                }
            }
            best.1
        }
    };
    let (_, ses_level) = ses_sse(&q, ses_alpha);
    Ok(ThetaFit {
        a,
        b,
        ses_alpha,
        ses_level,
    })
}

/// Forecasts and the fit they came from.
pub fn theta_values(values: &[f64], horizon: usize, cfg: &ThetaConfig) -> Result<(Vec<f64>, ThetaFit)> {
    let fit = theta_fit(values, cfg)?;
    let base = values[0];
    let last = (values.len() - 1) as f64;
    let w = 1.0 / cfg.theta;
    let forecast = (1..=horizon)
        .map(|h| {
            let line = fit.a + fit.b * (last + h as f64);
            base + (w * fit.ses_level + (1.0 - w) * line)
        })
        .collect();
    Ok((forecast, fit))
}

pub fn theta_forecast(series: &FrequencySeries, horizon: usize, cfg: &ThetaConfig) -> Result<Forecast> {
    let (values, _) = theta_values(&series.frequencies, horizon, cfg)?;
    Ok(Forecast {
        model: ModelSpec::Theta(*cfg),
        horizon,
        values,
    })
}
