use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{LagRegressionConfig, ModelSpec, ThetaConfig};
use crate::backtest::mape;
use crate::error::{Error, Result};

/// Share of the series held out for validation.
pub const VALIDATION_SHARE: f64 = 0.25;

/// Hyperparameter space to sample from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ModelFamily {
    /// θ uniform in `[1, 3]`; α fixed uniform in `[0.01, 0.99]` or grid-optimised, with equal odds.
    Theta,
    /// Up to `max_terms` distinct lags from `1..=max_lag`; covariates toggled
    /// at random when `allow_covariates`.
    LagRegression {
        max_lag: usize,
        max_terms: usize,
        allow_covariates: bool,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub spec: ModelSpec,
    /// Validation MAPE; `None` when the trial could not be fitted.
    pub mape: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub best: ModelSpec,
    pub best_mape: f64,
    pub trials: Vec<Trial>,
}

fn sample(family: &ModelFamily, rng: &mut ChaCha8Rng) -> Result<ModelSpec> {
    Ok(match family {
        ModelFamily::Theta => {
            let theta = rng.random_range(1.0..=3.0);
            let alpha = if rng.random_bool(0.5) {
                Some(rng.random_range(0.01..=0.99))
            } else {
                None
            };
            ModelSpec::Theta(ThetaConfig { theta, alpha })
        }
        ModelFamily::LagRegression {
            max_lag,
            max_terms,
            allow_covariates,
        } => {
            if *max_lag == 0 || *max_terms == 0 {
                return Err(Error::invalid(
                    "max_lag",
                    "lag search needs max_lag ≥ 1 and max_terms ≥ 1",
                ));
            }
            let terms = rng.random_range(1..=(*max_terms).min(*max_lag));
            let mut lags = rand::seq::index::sample(rng, *max_lag, terms)
                .into_iter()
                .map(|i| i + 1)
                .collect::<Vec<_>>();
            lags.sort_unstable();
            let mut cfg = LagRegressionConfig::new(lags);
            cfg.use_covariates = *allow_covariates && rng.random_bool(0.5);
            ModelSpec::LagRegression(cfg)
        }
    })
}

/// Samples `budget` configurations from a seeded stream and keeps the one
/// with the lowest MAPE when trained on the first 75% and scored over the
/// remaining tail. Ties go to the earlier trial.
pub fn random_search(
    family: &ModelFamily,
    values: &[f64],
    covariates: &[Vec<f64>],
    budget: usize,
    seed: u64,
) -> Result<SearchResult> {
    if budget == 0 {
        return Err(Error::invalid("budget", "need at least one trial"));
    }
    let split = ((1.0 - VALIDATION_SHARE) * values.len() as f64).floor() as usize;
    if split < 2 || split >= values.len() {
        return Err(Error::SeriesTooShort(format!(
            "{} samples cannot be split for validation",
            values.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let specs = (0..budget)
        .map(|_| sample(family, &mut rng))
        .collect::<Result<Vec<_>>>()?;
    let (train, valid) = values.split_at(split);
    let train_cov: Vec<Vec<f64>> = covariates.iter().map(|c| c[..split].to_vec()).collect();
    let trials: Vec<Trial> = specs
        .into_par_iter()
        .map(|spec| {
            let mape = spec
                .forecast_values(train, &train_cov, valid.len())
                .and_then(|f| mape(valid, &f))
                .ok();
            Trial { spec, mape }
        })
        .collect();
    let (best, best_mape) = trials
        .iter()
        .filter_map(|t| t.mape.map(|m| (t, m)))
        .fold(None, |acc: Option<(&Trial, f64)>, (t, m)| match acc {
            Some((_, bm)) if bm <= m => acc,
            _ => Some((t, m)),
        })
        .ok_or_else(|| Error::Numerical("no search trial could be fitted".into()))?;
    Ok(SearchResult {
        best: best.spec.clone(),
        best_mape,
        trials,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trend(n: usize) -> Vec<f64> {
        (0..n)
            .map(|i| {
                let t = i as f64;
                2.0e8 * (1.0 - 6.4e-4 * t / n as f64) + 3.0 * (t / 17.0).sin()
            })
            .collect()
    }

    #[test]
    fn single_trial_is_returned() {
        let r = random_search(&ModelFamily::Theta, &trend(200), &[], 1, 3).unwrap();
        assert_eq!(r.trials.len(), 1);
        assert_eq!(r.best, r.trials[0].spec);
    }

    #[test]
    fn larger_budget_never_worse_and_prefix_stable() {
        let x = trend(300);
        let family = ModelFamily::LagRegression {
            max_lag: 6,
            max_terms: 3,
            allow_covariates: false,
        };
        let mut prev = f64::INFINITY;
        let long = random_search(&family, &x, &[], 24, 11).unwrap();
        for budget in [1, 2, 5, 12, 24] {
            let r = random_search(&family, &x, &[], budget, 11).unwrap();
            assert_eq!(r.trials[..], long.trials[..budget]);
            assert!(r.best_mape <= prev);
            prev = r.best_mape;
        }
    }

    #[test]
    fn theta_search_beats_naive() {
        let x = trend(400);
        let r = random_search(&ModelFamily::Theta, &x, &[], 16, 5).unwrap();
        let split = 300;
        let naive = ModelSpec::Naive.forecast_values(&x[..split], &[], 100).unwrap();
        assert!(r.best_mape < mape(&x[split..], &naive).unwrap());
        assert!(r
            .trials
            .iter()
            .all(|t| matches!(t.spec, ModelSpec::Theta(c) if (1.0..=3.0).contains(&c.theta))));
    }

    #[test]
    fn rejects_empty_budget() {
        assert!(random_search(&ModelFamily::Theta, &trend(100), &[], 0, 1).is_err());
    }
}
