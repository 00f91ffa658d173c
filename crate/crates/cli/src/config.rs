//! Run configuration, read from a JSON file. Every field has a default, so an
//! empty object `{}` is a valid configuration.

use std::path::{Path, PathBuf};

use roage_core::backtest::{BacktestConfig, TrainingWindow};
use roage_core::forecast::{ModelFamily, ModelSpec, ThetaConfig};
use roage_core::sim::{AnomalySpec, FleetSpec, SpatialField};
use roage_core::Campaign;
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Root seed; required by `simulate` and by forecast searches.
    pub seed: Option<u64>,
    /// Kind of measurement campaign the data comes from.
    pub campaign: Campaign,
    pub input: InputPaths,
    /// Resample continuous series onto a regular grid at the inferred period.
    pub resample: bool,
    pub simulate: SimulateSettings,
    pub trend: TrendSettings,
    pub shift: ShiftSettings,
    pub outliers: OutlierSettings,
    pub map: MapSettings,
    pub trendtest: TrendTestSettings,
    pub forecast: ForecastSettings,
    pub backtest: BacktestConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: None,
            campaign: Campaign::Continuous,
            input: InputPaths::default(),
            resample: false,
            simulate: SimulateSettings::default(),
            trend: TrendSettings::default(),
            shift: ShiftSettings::default(),
            outliers: OutlierSettings::default(),
            map: MapSettings::default(),
            trendtest: TrendTestSettings::default(),
            forecast: ForecastSettings::default(),
            backtest: BacktestConfig::new(
                TrainingWindow::Expanding { initial_days: 120.0 },
                60.0,
                ModelSpec::Theta(ThetaConfig::default()),
            ),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))
    }

    pub fn require_seed(&self, step: &str) -> Result<u64, CliError> {
        self.seed.ok_or_else(|| {
            CliError::Usage(format!(
                "`{step}` is stochastic and needs a seed (config `seed` or --seed)"
            ))
        })
    }
}

/// Measurement files; defaults to the output directory's `measurements.csv`
/// and `covariates.csv`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct InputPaths {
    pub measurements: Option<PathBuf>,
    pub covariates: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSettings {
    /// Full fleet description; the reference fleet for the campaign is used when absent.
    pub fleet: Option<FleetSpec>,
    /// Devices of the reference fleet.
    pub devices: usize,
    /// Repeated measurements per oscillator and epoch (shutdown campaigns).
    pub repeats: usize,
    /// Also write environmental covariates (continuous campaigns).
    pub covariates: bool,
    /// Devices with an additional shift, applied on top of the fleet.
    pub anomalies: Vec<AnomalySpec>,
    /// Spatial field applied on top of the fleet.
    pub spatial_field: Option<SpatialField>,
}

impl Default for SimulateSettings {
    fn default() -> Self {
        Self {
            fleet: None,
            devices: 10,
            repeats: 100,
            covariates: true,
            anomalies: Vec::new(),
            spatial_field: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum TrendKind {
    Ewma,
    Loess,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct TrendSettings {
    pub method: TrendKind,
    pub half_life_days: f64,
    /// Fraction of points in each LOESS window.
    pub loess_span: f64,
}

impl Default for TrendSettings {
    fn default() -> Self {
        Self {
            method: TrendKind::Ewma,
            half_life_days: 30.0,
            loess_span: 0.3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct ShiftSettings {
    /// Length of the first and last windows of a continuous series.
    pub window_days: f64,
}

impl Default for ShiftSettings {
    fn default() -> Self {
        Self { window_days: 30.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct OutlierSettings {
    pub threshold: f64,
    /// Thresholds at which the share of flagged devices is reported.
    pub share_thresholds: Vec<f64>,
}

impl Default for OutlierSettings {
    fn default() -> Self {
        Self {
            threshold: roage_core::stats::DEFAULT_THRESHOLD,
            share_thresholds: (0..=20).map(|i| i as f64 * 0.5).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct MapSettings {
    /// Grid points per axis over the oscillators' bounding box.
    pub resolution: usize,
}

impl Default for MapSettings {
    fn default() -> Self {
        Self { resolution: 46 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct TrendTestSettings {
    pub alpha: f64,
}

impl Default for TrendTestSettings {
    fn default() -> Self {
        Self {
            alpha: roage_core::stats::DEFAULT_ALPHA,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct SearchSettings {
    pub family: ModelFamily,
    pub budget: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct ForecastSettings {
    pub model: ModelSpec,
    pub horizon_days: f64,
    /// Pick the model per series by random search instead of using `model`.
    pub search: Option<SearchSettings>,
}

impl Default for ForecastSettings {
    fn default() -> Self {
        Self {
            model: ModelSpec::Theta(ThetaConfig::default()),
            horizon_days: 60.0,
            search: None,
        }
    }
}

pub fn schema() -> schemars::Schema {
    schemars::schema_for!(RunConfig)
}
