use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{check_values, Forecast, ModelSpec};
use crate::error::{Error, Result};
use crate::model::{CovariateSeries, FrequencySeries};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
pub struct LagRegressionConfig {
    /// Sorted, distinct, positive.
    pub lags: Vec<usize>,
    #[serde(default)]
    pub use_covariates: bool,
    #[serde(default = "default_covariate_lags")]
    pub covariate_lags: Vec<usize>,
}

fn default_covariate_lags() -> Vec<usize> {
    vec![1]
}

impl LagRegressionConfig {
    pub fn new(lags: Vec<usize>) -> Self {
        Self {
            lags,
            use_covariates: false,
            covariate_lags: default_covariate_lags(),
        }
    }

    pub fn with_covariates(mut self) -> Self {
        self.use_covariates = true;
        self
    }

    pub fn check(&self) -> Result<()> {
        let ok = |l: &[usize]| !l.is_empty() && l[0] >= 1 && l.windows(2).all(|w| w[0] < w[1]);
        if !ok(&self.lags) {
            return Err(Error::invalid(
                "lags",
                "must be non-empty, positive, sorted and distinct",
            ));
        }
        if self.use_covariates && !ok(&self.covariate_lags) {
            return Err(Error::invalid(
                "covariate_lags",
                "must be non-empty, positive, sorted and distinct",
            ));
        }
        Ok(())
    }

    fn max_lag(&self) -> usize {
        let own = *self.lags.last().unwrap_or(&0);
        if self.use_covariates {
            own.max(*self.covariate_lags.last().unwrap_or(&0))
        } else {
            own
        }
    }
}

/// Fitted regression; features are standardised internally.
#[derive(Debug, Clone, PartialEq)]
pub struct LagModel {
    cfg: LagRegressionConfig,
    /// Per feature: (mean, scale, coefficient on the standardised feature).
    columns: Vec<(f64, f64, f64)>,
    intercept: f64,
    /// Subtracted from the target before fitting.
    base: f64,
}

const RANK_TOLERANCE: f64 = 1e-10;

fn features_at(cfg: &LagRegressionConfig, target: &[f64], covariates: &[Vec<f64>], t: usize, out: &mut Vec<f64>) {
    out.clear();
    out.extend(cfg.lags.iter().map(|&l| target[t - l]));
    if cfg.use_covariates {
        for c in covariates {
            out.extend(cfg.covariate_lags.iter().map(|&l| c[t - l]));
        }
    }
}

/// Least squares of `values[t]` on its lags (and lagged covariates).
pub fn lag_regression_fit(values: &[f64], covariates: &[Vec<f64>], cfg: &LagRegressionConfig) -> Result<LagModel> {
    cfg.check()?;
    let max_lag = cfg.max_lag();
    check_values(values, max_lag + 3, "lag regression")?;
    if cfg.use_covariates {
        if covariates.is_empty() {
            return Err(Error::invalid(
                "covariates",
                "use_covariates is set but none were supplied",
            ));
        }
        if let Some(c) = covariates.iter().find(|c| c.len() != values.len()) {
            return Err(Error::LengthMismatch {
                left: values.len(),
                right: c.len(),
            });
        }
        if covariates.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite covariate value".into()));
        }
    }
    let base = values[0];
    let y: Vec<f64> = values.iter().map(|v| v - base).collect();
    let rows = y.len() - max_lag;
    let mut design: Vec<Vec<f64>> = Vec::with_capacity(rows);
    let mut buf = Vec::new();
    for t in max_lag..y.len() {
        features_at(cfg, &y, covariates, t, &mut buf);
        design.push(buf.clone());
    }
    let p = design[0].len();
    let target = &y[max_lag..];
    let target_mean = target.iter().sum::<f64>() / rows as f64;

    let mut columns = Vec::with_capacity(p);
    let mut active = Vec::new();
    for j in 0..p {
        let mean = design.iter().map(|r| r[j]).sum::<f64>() / rows as f64;
        let ss = design.iter().map(|r| (r[j] - mean) * (r[j] - mean)).sum::<f64>();
        let scale = (ss / rows as f64).sqrt();
        let magnitude = design.iter().map(|r| r[j].abs()).fold(0.0, f64::max);
        // constant columns are absorbed by the intercept
        if scale <= 1e-14 * magnitude || scale == 0.0 {
            columns.push((mean, 1.0, 0.0));
        } else {
            columns.push((mean, scale, 0.0));
            active.push(j);
        }
    }

    if !active.is_empty() {
        let x = DMatrix::from_fn(rows, active.len(), |i, k| {
            let j = active[k];
            (design[i][j] - columns[j].0) / columns[j].1
        });
        let rhs = DVector::from_iterator(rows, target.iter().map(|v| v - target_mean));
        let svd = x.svd(true, true);
        let smax = svd.singular_values.max();
        let smin = svd.singular_values.min();
        if !(smin > RANK_TOLERANCE * smax) {
            return Err(Error::DegenerateFeatures(format!(
                "design matrix is rank deficient (condition {:.3e})",
                smax / smin
            )));
        }
        let beta = svd
            .solve(&rhs, 0.0)
            .map_err(|e| Error::Numerical(format!("least squares failed: {e}")))?;
        for (k, &j) in active.iter().enumerate() {
            columns[j].2 = beta[k];
        }
    }
    Ok(LagModel {
        cfg: cfg.clone(),
        columns,
        intercept: target_mean,
        base,
    })
}

impl LagModel {
    /// Coefficients in feature units, own lags first, then covariates.
    pub fn coefficients(&self) -> Vec<f64> {
        self.columns.iter().map(|c| c.2 / c.1).collect()
    }

    fn predict(&self, features: &[f64]) -> f64 {
        self.intercept
            + self
                .columns
                .iter()
                .zip(features)
                .map(|(&(mean, scale, coef), &f)| coef * (f - mean) / scale)
                .sum::<f64>()
    }

    /// Recursive multi-step forecast; covariates are held at their last value.
    pub fn forecast(&self, values: &[f64], covariates: &[Vec<f64>], horizon: usize) -> Vec<f64> {
        let n = values.len();
        let mut y: Vec<f64> = values.iter().map(|v| v - self.base).collect();
        let mut cov: Vec<Vec<f64>> = if self.cfg.use_covariates {
            covariates.to_vec()
        } else {
            Vec::new()
        };
        let mut buf = Vec::new();
        for t in n..n + horizon {
            for c in &mut cov {
                let last = c[c.len() - 1];
                c.push(last);
            }
            features_at(&self.cfg, &y, &cov, t, &mut buf);
            let next = self.predict(&buf);
            y.push(next);
        }
        y[n..].iter().map(|v| v + self.base).collect()
    }
}

/// Forecasts `horizon` steps past the end of `values`; `covariates` are
/// aligned with `values` and only read when the config enables them.
pub fn lag_regression_values(
    values: &[f64],
    covariates: &[Vec<f64>],
    cfg: &LagRegressionConfig,
    horizon: usize,
) -> Result<Vec<f64>> {
    let model = lag_regression_fit(values, covariates, cfg)?;
    Ok(model.forecast(values, covariates, horizon))
}

pub fn lag_regression_forecast(
    series: &FrequencySeries,
    cfg: &LagRegressionConfig,
    covariates: &[CovariateSeries],
    horizon: usize,
) -> Result<Forecast> {
    let aligned = if cfg.use_covariates {
        super::align_covariates(&series.timestamps, covariates)?
    } else {
        Vec::new()
    };
    Ok(Forecast {
        model: ModelSpec::LagRegression(cfg.clone()),
        horizon,
        values: lag_regression_values(&series.frequencies, &aligned, cfg, horizon)?,
    })
}
