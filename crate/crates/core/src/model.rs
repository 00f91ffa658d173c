//! Shared measurement data model.
//!
//! Timestamps are UTC epoch seconds. All collections are plain vectors; the
//! types carry no interior mutability and are freely shared across threads.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Seconds since the Unix epoch, UTC.
pub type Timestamp = i64;

pub const SECONDS_PER_HOUR: i64 = 3_600;
pub const SECONDS_PER_DAY: i64 = 86_400;

/// Placement of a ring oscillator on the FPGA fabric.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
pub struct GridLocation {
    pub x: i64,
    pub y: i64,
}

impl GridLocation {
    pub const fn new(x: i64, y: i64) -> Self {
        Self { x, y }
    }

    pub fn is_valid(&self) -> bool {
        self.x >= 0 && self.y >= 0
    }
}

impl fmt::Display for GridLocation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(X={}; Y={})", self.x, self.y)
    }
}

/// Frequency samples of one oscillator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencySeries {
    pub device_id: String,
    pub ro_id: String,
    pub location: GridLocation,
    pub timestamps: Vec<Timestamp>,
    /// Hz.
    pub frequencies: Vec<f64>,
}

impl FrequencySeries {
    pub fn new(
        device_id: impl Into<String>,
        ro_id: impl Into<String>,
        location: GridLocation,
        timestamps: Vec<Timestamp>,
        frequencies: Vec<f64>,
    ) -> Self {
        Self {
            device_id: device_id.into(),
            ro_id: ro_id.into(),
            location,
            timestamps,
            frequencies,
        }
    }

    /// Builds a series on a regular grid starting at `start`, mostly for tests.
    pub fn regular(
        device_id: impl Into<String>,
        ro_id: impl Into<String>,
        start: Timestamp,
        period: i64,
        frequencies: Vec<f64>,
    ) -> Self {
        let timestamps = (0..frequencies.len() as i64).map(|k| start + k * period).collect();
        Self::new(device_id, ro_id, GridLocation::new(0, 0), timestamps, frequencies)
    }

    pub fn len(&self) -> usize {
        self.frequencies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frequencies.is_empty()
    }

    /// Same identity and timestamps, new values.
    pub fn with_frequencies(&self, frequencies: Vec<f64>) -> Self {
        debug_assert_eq!(frequencies.len(), self.timestamps.len());
        Self {
            device_id: self.device_id.clone(),
            ro_id: self.ro_id.clone(),
            location: self.location,
            timestamps: self.timestamps.clone(),
            frequencies,
        }
    }

    pub fn key(&self) -> (&str, &str) {
        (&self.device_id, &self.ro_id)
    }

    pub fn label(&self) -> String {
        format!("{}/{}", self.device_id, self.ro_id)
    }

    /// Time covered by the samples, in seconds.
    pub fn span(&self) -> i64 {
        match (self.timestamps.first(), self.timestamps.last()) {
            (Some(a), Some(b)) => b - a,
            _ => 0,
        }
    }
}

/// The 13 environmental magnitudes recorded next to the oscillator data.
pub const KNOWN_COVARIATES: [&str; 13] = [
    "core-1v0-voltage",
    "ddr-1v5-voltage",
    "rail-1v8-voltage",
    "rail-2v5-voltage",
    "payload-12v-voltage",
    "management-3v3-voltage",
    "fpga-die-temperature",
    "board-temperature",
    "refrigeration-inlet-temperature",
    "refrigeration-inner-temperature",
    "refrigeration-outlet-temperature",
    "rtm-management-current",
    "rtm-payload-current",
];

/// Prefix for covariate names outside [`KNOWN_COVARIATES`].
pub const CUSTOM_COVARIATE_PREFIX: &str = "custom:";

pub fn is_known_covariate(name: &str) -> bool {
    KNOWN_COVARIATES.contains(&name) || name.starts_with(CUSTOM_COVARIATE_PREFIX)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateSeries {
    pub device_id: String,
    pub name: String,
    pub timestamps: Vec<Timestamp>,
    pub values: Vec<f64>,
}

impl CovariateSeries {
    /// Last value observed at or before `t`, if any.
    pub fn value_at_or_before(&self, t: Timestamp) -> Option<f64> {
        match self.timestamps.binary_search(&t) {
            Ok(i) => Some(self.values[i]),
            Err(0) => None,
            Err(i) => Some(self.values[i - 1]),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
#[serde(rename_all = "lowercase")]
pub enum Campaign {
    /// Repeated measurements of many oscillators while the device is idle.
    Shutdown,
    /// Periodic measurements during normal operation.
    Continuous,
}

impl fmt::Display for Campaign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Campaign::Shutdown => "shutdown",
            Campaign::Continuous => "continuous",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FleetDataset {
    pub series: Vec<FrequencySeries>,
    pub covariates: Vec<CovariateSeries>,
    pub campaign: Campaign,
    /// Nominal sampling period in seconds; continuous campaigns only.
    pub sample_period: Option<i64>,
}

impl FleetDataset {
    pub fn continuous(series: Vec<FrequencySeries>, sample_period: i64) -> Self {
        Self {
            series,
            covariates: Vec::new(),
            campaign: Campaign::Continuous,
            sample_period: Some(sample_period),
        }
    }

    pub fn shutdown(series: Vec<FrequencySeries>) -> Self {
        Self {
            series,
            covariates: Vec::new(),
            campaign: Campaign::Shutdown,
            sample_period: None,
        }
    }

    /// Distinct device ids in order of first appearance.
    pub fn device_ids(&self) -> Vec<&str> {
        let mut seen = HashSet::new();
        self.series
            .iter()
            .map(|s| s.device_id.as_str())
            .filter(|d| seen.insert(*d))
            .collect()
    }

    pub fn covariates_of<'a>(&'a self, device_id: &'a str) -> impl Iterator<Item = &'a CovariateSeries> + 'a {
        self.covariates.iter().filter(move |c| c.device_id == device_id)
    }

    /// The sample period, or an error when the dataset is not a continuous campaign.
    pub fn require_continuous(&self) -> Result<i64> {
        match (self.campaign, self.sample_period) {
            (Campaign::Continuous, Some(p)) if p > 0 => Ok(p),
            (Campaign::Continuous, _) => Err(Error::invalid(
                "sample_period",
                "continuous campaign without a positive sample period",
            )),
            (Campaign::Shutdown, _) => Err(Error::invalid("campaign", "operation requires a continuous campaign")),
        }
    }
}

/// The invariant a [`Violation`] breaks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum Rule {
    EmptySeries,
    LengthMismatch { timestamps: usize, values: usize },
    TimestampsNotIncreasing { index: usize },
    NonPositiveFrequency { index: usize },
    NonFiniteValue { index: usize },
    NegativeLocation,
    DuplicateSeries,
    MissingSamplePeriod,
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rule::EmptySeries => write!(f, "series has no samples"),
            Rule::LengthMismatch { timestamps, values } => {
                write!(f, "{timestamps} timestamps but {values} values")
            }
            Rule::TimestampsNotIncreasing { index } => {
                write!(f, "timestamp at index {index} does not increase")
            }
            Rule::NonPositiveFrequency { index } => write!(f, "frequency at index {index} is not positive"),
            Rule::NonFiniteValue { index } => write!(f, "value at index {index} is not finite"),
            Rule::NegativeLocation => write!(f, "grid location has a negative coordinate"),
            Rule::DuplicateSeries => write!(f, "duplicate (device_id, ro_id) pair"),
            Rule::MissingSamplePeriod => write!(f, "continuous campaign without a positive sample period"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    /// `device/ro` for frequency series, `device/covariate:name` for covariates,
    /// `dataset` for campaign-level rules.
    pub series: String,
    #[serde(flatten)]
    pub rule: Rule,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.series, self.rule)
    }
}

fn check_timeline(label: &str, timestamps: &[Timestamp], values: &[f64], out: &mut Vec<Violation>) {
    let mut push = |rule| {
        out.push(Violation {
            series: label.to_owned(),
            rule,
        })
    };
    if timestamps.len() != values.len() {
        push(Rule::LengthMismatch {
            timestamps: timestamps.len(),
            values: values.len(),
        });
    }
    if values.is_empty() {
        push(Rule::EmptySeries);
    }
    if let Some(i) = timestamps.windows(2).position(|w| w[1] <= w[0]) {
        push(Rule::TimestampsNotIncreasing { index: i + 1 });
    }
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        push(Rule::NonFiniteValue { index: i });
    }
}

/// Checks every invariant of the data model. An empty result means the
/// dataset is well formed.
pub fn validate(dataset: &FleetDataset) -> Vec<Violation> {
    let mut out = Vec::new();
    if dataset.campaign == Campaign::Continuous && !matches!(dataset.sample_period, Some(p) if p > 0) {
        out.push(Violation {
            series: "dataset".into(),
            rule: Rule::MissingSamplePeriod,
        });
    }

    let mut keys = HashSet::new();
    for s in &dataset.series {
        let label = s.label();
        if !keys.insert(s.key()) {
            out.push(Violation {
                series: label.clone(),
                rule: Rule::DuplicateSeries,
            });
        }
        if !s.location.is_valid() {
            out.push(Violation {
                series: label.clone(),
                rule: Rule::NegativeLocation,
            });
        }
        check_timeline(&label, &s.timestamps, &s.frequencies, &mut out);
        if let Some(i) = s.frequencies.iter().position(|&f| f.is_finite() && f <= 0.0) {
            out.push(Violation {
                series: label,
                rule: Rule::NonPositiveFrequency { index: i },
            });
        }
    }

    let mut cov_keys = HashSet::new();
    for c in &dataset.covariates {
        let label = format!("{}/covariate:{}", c.device_id, c.name);
        if !cov_keys.insert((c.device_id.as_str(), c.name.as_str())) {
            out.push(Violation {
                series: label.clone(),
                rule: Rule::DuplicateSeries,
            });
        }
        check_timeline(&label, &c.timestamps, &c.values, &mut out);
    }
    out
}

/// Median of a sample; the mean of the two central values for even lengths.
pub fn median(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptySample);
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(median_of_sorted(&sorted))
}

pub(crate) fn median_of_sorted(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Quantile with linear interpolation between order statistics (`q` in `[0, 1]`).
pub fn quantile(values: &[f64], q: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptySample);
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::invalid("q", format!("{q} is outside [0, 1]")));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    Ok(sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64))
}

pub fn mean(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptySample);
    }
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn series(device: &str, ro: &str, ts: Vec<i64>) -> FrequencySeries {
        let n = ts.len();
        FrequencySeries::new(device, ro, GridLocation::new(1, 2), ts, vec![2.0e8; n])
    }

    fn two_device_dataset() -> FleetDataset {
        FleetDataset::continuous(
            vec![
                series("d0", "ro0", vec![0, 7200, 14400]),
                series("d0", "ro1", vec![0, 7200, 14400]),
                series("d1", "ro0", vec![0, 7200, 14400]),
            ],
            7200,
        )
    }

    #[test]
    fn well_formed_dataset_has_no_violations() {
        assert!(validate(&two_device_dataset()).is_empty());
    }

    #[test]
    fn non_monotonic_timestamps_are_reported() {
        let mut ds = two_device_dataset();
        ds.series[1].timestamps = vec![0, 14400, 7200];
        let v = validate(&ds);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].series, "d0/ro1");
        assert_eq!(v[0].rule, Rule::TimestampsNotIncreasing { index: 2 });
    }

    #[test]
    fn duplicate_pair_is_reported() {
        let mut ds = two_device_dataset();
        ds.series[2].device_id = "d0".into();
        let v = validate(&ds);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].rule, Rule::DuplicateSeries);
    }

    #[test]
    fn other_rules() {
        let mut ds = two_device_dataset();
        ds.series[0].frequencies[1] = -1.0;
        ds.series[1].location = GridLocation::new(-1, 0);
        ds.series[2].frequencies.pop();
        ds.sample_period = None;
        let rules: Vec<_> = validate(&ds).into_iter().map(|v| v.rule).collect();
        assert!(rules.contains(&Rule::NonPositiveFrequency { index: 1 }));
        assert!(rules.contains(&Rule::NegativeLocation));
        assert!(rules.contains(&Rule::LengthMismatch {
            timestamps: 3,
            values: 2
        }));
        assert!(rules.contains(&Rule::MissingSamplePeriod));
    }

    #[test]
    fn median_examples() {
        assert_eq!(median(&[1.0, 2.0, 3.0]).unwrap(), 2.0);
        assert_eq!(median(&[1.0, 2.0, 3.0, 4.0]).unwrap(), 2.5);
        assert_eq!(median(&[5.0]).unwrap(), 5.0);
        assert_eq!(median(&[]), Err(Error::EmptySample));
        assert_eq!(Error::EmptySample.to_string(), "empty sample");
    }

    #[test]
    fn quantile_interpolates() {
        let xs = [4.0, 1.0, 3.0, 2.0];
        assert_eq!(quantile(&xs, 0.0).unwrap(), 1.0);
        assert_eq!(quantile(&xs, 1.0).unwrap(), 4.0);
        assert_eq!(quantile(&xs, 0.5).unwrap(), 2.5);
        assert_eq!(quantile(&xs, 0.25).unwrap(), 1.75);
    }

    #[test]
    fn covariate_lookup_holds_last_value() {
        let c = CovariateSeries {
            device_id: "d".into(),
            name: KNOWN_COVARIATES[0].into(),
            timestamps: vec![10, 20],
            values: vec![1.0, 2.0],
        };
        assert_eq!(c.value_at_or_before(5), None);
        assert_eq!(c.value_at_or_before(10), Some(1.0));
        assert_eq!(c.value_at_or_before(15), Some(1.0));
        assert_eq!(c.value_at_or_before(99), Some(2.0));
    }

    proptest! {
        #[test]
        fn median_is_permutation_invariant_and_bounded(
            mut xs in prop::collection::vec(-1e6f64..1e6, 1..60),
            seed in any::<u64>(),
        ) {
            let m = median(&xs).unwrap();
            let lo = xs.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(lo <= m && m <= hi);
            // deterministic shuffle
            let mut s = seed;
            for i in (1..xs.len()).rev() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                xs.swap(i, (s >> 33) as usize % (i + 1));
            }
            prop_assert_eq!(median(&xs).unwrap(), m);
        }

        #[test]
        fn shuffled_timestamps_are_rejected(n in 3usize..40, seed in any::<u64>()) {
            let mut ts: Vec<i64> = (0..n as i64).map(|k| k * 7200).collect();
            let mut s = seed | 1;
            for i in (1..n).rev() {
                s ^= s << 13; s ^= s >> 7; s ^= s << 17;
                ts.swap(i, s as usize % (i + 1));
            }
            let sorted = ts.windows(2).all(|w| w[0] < w[1]);
            let ds = FleetDataset::continuous(vec![series("d", "r", ts)], 7200);
            let v = validate(&ds);
            prop_assert_eq!(v.is_empty(), sorted);
            // idempotent
            prop_assert_eq!(validate(&ds), v);
        }
    }
}
