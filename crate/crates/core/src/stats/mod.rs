//! Fleet statistics: robust outlier scores, regression slopes and Kendall trend tests.

mod kendall;
mod outliers;
mod regression;

pub use kendall::{
    fleet_trend_test, kendall_tau, kendall_tau_b, kendall_tau_values, FleetTrendTest, KendallCounts, SeriesTrend,
    TrendTestResult, DEFAULT_ALPHA, MIN_KENDALL_SAMPLES,
};
pub use outliers::{
    device_shifts, modified_z_scores, outlier_share_curve, DeviceScore, OutlierReport, ScaleEstimate, SharePoint,
    DEFAULT_THRESHOLD, MEAN_AD_CONSTANT, MODIFIED_Z_CONSTANT,
};
pub use regression::{fit_linear, fit_linear_values, fleet_slopes, RegressionResult, SlopeSummary};
