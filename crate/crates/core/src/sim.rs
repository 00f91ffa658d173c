//! Synthetic fleets of ageing ring oscillators.
//!
//! Each oscillator follows
//! `f(t) = f0 · (1 + (m·s + e) · ((t − start) / horizon)^exponent) · (1 + noise)`
//! where `s` is the oscillator's drawn total shift, `m` the spatial multiplier at
//! its location and `e` the extra shift of an anomalous device. Every oscillator
//! has its own RNG stream derived from the root seed and its identity, so the
//! output does not depend on how the work is scheduled.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    Campaign, CovariateSeries, FleetDataset, FrequencySeries, GridLocation, Timestamp, KNOWN_COVARIATES,
    SECONDS_PER_DAY, SECONDS_PER_HOUR,
};

/// Oscillation frequency of an `n_stages` inverter ring with per-stage delay `t_p` seconds.
pub fn ro_frequency(n_stages: u32, t_p: f64) -> Result<f64> {
    if n_stages == 0 || n_stages.is_multiple_of(2) {
        return Err(Error::invalid(
            "n_stages",
            format!("{n_stages} is not an odd positive count"),
        ));
    }
    if !(t_p > 0.0) || !t_p.is_finite() {
        return Err(Error::invalid(
            "t_p",
            format!("propagation delay must be positive, got {t_p}"),
        ));
    }
    Ok(1.0 / (2.0 * n_stages as f64 * t_p))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
pub struct RoPhysicalConfig {
    pub n_stages: u32,
    /// Initial per-stage propagation delay, seconds.
    pub t_p0: f64,
}

impl RoPhysicalConfig {
    pub fn new(n_stages: u32, t_p0: f64) -> Result<Self> {
        let cfg = Self { n_stages, t_p0 };
        cfg.check()?;
        Ok(cfg)
    }

    /// Delay chosen so that the ring runs at `frequency` Hz.
    pub fn for_frequency(n_stages: u32, frequency: f64) -> Result<Self> {
        if !(frequency > 0.0) {
            return Err(Error::invalid("frequency", "must be positive"));
        }
        Self::new(n_stages, 1.0 / (2.0 * n_stages as f64 * frequency))
    }

    pub fn check(&self) -> Result<()> {
        if self.n_stages < 3 || self.n_stages.is_multiple_of(2) {
            return Err(Error::invalid(
                "n_stages",
                format!("{} must be odd and at least 3", self.n_stages),
            ));
        }
        if !(self.t_p0 > 0.0) {
            return Err(Error::invalid("t_p0", "must be positive"));
        }
        Ok(())
    }

    pub fn frequency(&self, t_p: f64) -> Result<f64> {
        ro_frequency(self.n_stages, t_p)
    }

    pub fn nominal_frequency(&self) -> f64 {
        1.0 / (2.0 * self.n_stages as f64 * self.t_p0)
    }
}

impl Default for RoPhysicalConfig {
    /// Seven stages at 200 MHz.
    fn default() -> Self {
        Self {
            n_stages: 7,
            t_p0: 1.0 / (2.0 * 7.0 * 200.0e6),
        }
    }
}

/// One entry of a tabulated spatial field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
pub struct FieldPoint {
    pub x: i64,
    pub y: i64,
    pub multiplier: f64,
}

/// Location-dependent multiplier on an oscillator's drawn shift.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SpatialField {
    /// Explicit multipliers; locations not listed get 1.
    Points { points: Vec<FieldPoint> },
    /// `1 + amplitude · exp(−d² / 2σ²)` around `center`.
    Hotspot {
        center: GridLocation,
        sigma: f64,
        amplitude: f64,
    },
}

impl SpatialField {
    pub fn multiplier(&self, loc: GridLocation) -> f64 {
        match self {
            SpatialField::Points { points } => points
                .iter()
                .find(|p| p.x == loc.x && p.y == loc.y)
                .map_or(1.0, |p| p.multiplier),
            SpatialField::Hotspot {
                center,
                sigma,
                amplitude,
            } => {
                let dx = (loc.x - center.x) as f64;
                let dy = (loc.y - center.y) as f64;
                1.0 + amplitude * (-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp()
            }
        }
    }

    fn check(&self) -> Result<()> {
        match self {
            SpatialField::Points { points } => {
                if points.iter().any(|p| !p.multiplier.is_finite()) {
                    return Err(Error::invalid("spatial_field", "non-finite multiplier"));
                }
            }
            SpatialField::Hotspot { sigma, amplitude, .. } => {
                if !(*sigma > 0.0) || !amplitude.is_finite() {
                    return Err(Error::invalid(
                        "spatial_field",
                        "hotspot needs sigma > 0 and a finite amplitude",
                    ));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
pub struct DegradationProfile {
    /// Median relative frequency change reached at `horizon` (negative for slow-down).
    pub total_shift: f64,
    /// Seconds.
    pub horizon: i64,
    /// Power-law exponent of the drift in time, in `(0, 1]`.
    pub exponent: f64,
    /// Relative standard deviation of the multiplicative measurement noise.
    pub noise_sigma: f64,
    /// Log-space standard deviation of the per-oscillator shift magnitude.
    pub shift_spread: f64,
    /// AR(1) coefficient of the noise; white noise when absent.
    #[serde(default)]
    pub noise_ar1: Option<f64>,
    #[serde(default)]
    pub spatial_field: Option<SpatialField>,
}

impl Default for DegradationProfile {
    fn default() -> Self {
        Self {
            total_shift: -6.4e-4,
            horizon: 280 * SECONDS_PER_DAY,
            exponent: 0.2,
            noise_sigma: 1.0e-4,
            shift_spread: 0.4,
            noise_ar1: None,
            spatial_field: None,
        }
    }
}

impl DegradationProfile {
    pub fn check(&self) -> Result<()> {
        if self.horizon <= 0 {
            return Err(Error::invalid("horizon", "must be positive"));
        }
        if !(self.exponent > 0.0 && self.exponent <= 1.0) {
            return Err(Error::invalid(
                "exponent",
                format!("{} is outside (0, 1]", self.exponent),
            ));
        }
        if !(self.noise_sigma >= 0.0) || !self.noise_sigma.is_finite() {
            return Err(Error::invalid("noise_sigma", "must be finite and non-negative"));
        }
        if !(self.shift_spread >= 0.0) || !self.shift_spread.is_finite() {
            return Err(Error::invalid("shift_spread", "must be finite and non-negative"));
        }
        if !self.total_shift.is_finite() || self.total_shift <= -1.0 {
            return Err(Error::invalid("total_shift", "must be finite and above -1"));
        }
        if let Some(phi) = self.noise_ar1 {
            if !(phi > -1.0 && phi < 1.0) {
                return Err(Error::invalid("noise_ar1", "must lie in (-1, 1)"));
            }
        }
        if let Some(field) = &self.spatial_field {
            field.check()?;
        }
        Ok(())
    }

    /// Time profile `((t − start) / horizon)^exponent`, zero before `start`.
    pub fn time_factor(&self, elapsed: i64) -> f64 {
        if elapsed <= 0 {
            0.0
        } else {
            (elapsed as f64 / self.horizon as f64).powf(self.exponent)
        }
    }
}

/// Baseline, in samples, that the windowed-median shift of an EWMA trend sees
/// on a unit-slope ramp `x_k = k`.
///
/// The adjusted EWMA of the ramp is `k − lag(k)` with
/// `lag(k) = Σ i·w^i / Σ w^i` (`w = 1 − alpha`, sums over `i = 0..=k`), which
/// is monotone in `k`, so the window medians are the mean of the two central
/// samples of each window. Used to reference a linear drift profile to that
/// measurement protocol.
pub fn window_protocol_baseline(samples: usize, window_samples: usize, alpha: f64) -> Result<f64> {
    if window_samples == 0 || 2 * window_samples > samples {
        return Err(Error::invalid(
            "window_samples",
            "window must fit twice into the series",
        ));
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::invalid("alpha", "must lie in (0, 1]"));
    }
    let w = 1.0 - alpha;
    let trend_at = |k: usize| -> f64 {
        if w == 0.0 {
            return k as f64;
        }
        let kf = k as f64;
        let wk = w.powi(k as i32);
        let s0 = (1.0 - wk * w) / (1.0 - w);
        let s1 = w * (1.0 - (kf + 1.0) * wk + kf * wk * w) / ((1.0 - w) * (1.0 - w));
        kf - s1 / s0
    };
    let window_median = |first: usize| -> f64 {
        let m = window_samples;
        if m % 2 == 1 {
            trend_at(first + m / 2)
        } else {
            0.5 * (trend_at(first + m / 2 - 1) + trend_at(first + m / 2))
        }
    };
    Ok(window_median(samples - window_samples) - window_median(0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
pub struct AnomalySpec {
    pub device_id: String,
    /// Relative offset added to the drift of every oscillator of the device.
    pub extra_shift: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
pub struct FleetSpec {
    pub devices: usize,
    pub ros_per_device: usize,
    /// Sampling period for continuous campaigns, spacing of repeats for
    /// shutdown campaigns; seconds.
    pub cadence: i64,
    /// Seconds covered by the campaign (continuous) or between the two
    /// shutdown epochs.
    pub span: i64,
    pub start: Timestamp,
    pub physical: RoPhysicalConfig,
    pub profile: DegradationProfile,
    #[serde(default)]
    pub anomalies: Vec<AnomalySpec>,
    /// Fabric extent `(columns, rows)` over which oscillators are placed.
    pub fabric: (i64, i64),
    /// Relative standard deviation of the per-oscillator nominal frequency.
    #[serde(default)]
    pub f0_spread: f64,
    pub seed: u64,
}

impl Default for FleetSpec {
    fn default() -> Self {
        Self {
            devices: 10,
            ros_per_device: 8,
            cadence: 2 * SECONDS_PER_HOUR,
            span: 280 * SECONDS_PER_DAY,
            start: 1_672_531_200,
            physical: RoPhysicalConfig::default(),
            profile: DegradationProfile::default(),
            anomalies: Vec::new(),
            fabric: (160, 240),
            f0_spread: 0.0,
            seed: 0,
        }
    }
}

impl FleetSpec {
    /// Device ids are `dev000`, `dev001`, ….
    pub fn device_id(index: usize) -> String {
        format!("dev{index:03}")
    }

    pub fn ro_id(index: usize) -> String {
        format!("ro{index:03}")
    }

    /// Oscillator placement shared by all devices: a near-square lattice of
    /// cell centres over the fabric.
    pub fn ro_locations(&self) -> Vec<GridLocation> {
        lattice_locations(self.ros_per_device, self.fabric)
    }

    fn check(&self) -> Result<()> {
        if self.devices == 0 || self.ros_per_device == 0 {
            return Err(Error::invalid(
                "devices",
                "device and oscillator counts must be positive",
            ));
        }
        if self.cadence <= 0 || self.cadence >= self.span {
            return Err(Error::invalid("cadence", "need 0 < cadence < span"));
        }
        if self.fabric.0 <= 0 || self.fabric.1 <= 0 {
            return Err(Error::invalid("fabric", "extent must be positive"));
        }
        if !(self.f0_spread >= 0.0 && self.f0_spread < 0.5) {
            return Err(Error::invalid("f0_spread", "must lie in [0, 0.5)"));
        }
        self.physical.check()?;
        self.profile.check()?;
        for a in &self.anomalies {
            let known = (0..self.devices).any(|i| Self::device_id(i) == a.device_id);
            if !known {
                return Err(Error::UnknownDevice(a.device_id.clone()));
            }
            if !a.extra_shift.is_finite() {
                return Err(Error::invalid("extra_shift", "must be finite"));
            }
        }
        Ok(())
    }

    /// Continuous campaign of `devices` × 8 oscillators sampled every 2 h for
    /// 280 days, with linear drift whose median shift reads −0.064 % through a
    /// 30-day half-life EWMA followed by 30-day window medians.
    pub fn reference_continuous(devices: usize, seed: u64) -> Result<Self> {
        let mut spec = Self {
            devices,
            seed,
            ..Self::default()
        };
        let samples = (spec.span / spec.cadence) as usize + 1;
        let window = (30 * SECONDS_PER_DAY / spec.cadence) as usize;
        let alpha = 1.0 - (-(2f64.ln()) / window as f64).exp();
        let baseline = window_protocol_baseline(samples, window, alpha)?;
        spec.profile = DegradationProfile {
            total_shift: -6.4e-4,
            horizon: (baseline * spec.cadence as f64).round() as i64,
            exponent: 1.0,
            noise_sigma: 1.0e-4,
            ..DegradationProfile::default()
        };
        Ok(spec)
    }

    /// Shutdown campaign of `devices` × 100 oscillators whose median shift
    /// between the two epochs is −0.0496 %.
    pub fn reference_shutdown(devices: usize, seed: u64) -> Self {
        Self {
            devices,
            ros_per_device: 100,
            seed,
            profile: DegradationProfile {
                total_shift: -4.96e-4,
                ..DegradationProfile::default()
            },
            ..Self::default()
        }
    }

    fn extra_shift(&self, device_id: &str) -> f64 {
        self.anomalies
            .iter()
            .filter(|a| a.device_id == device_id)
            .map(|a| a.extra_shift)
            .sum()
    }
}

pub fn lattice_locations(count: usize, fabric: (i64, i64)) -> Vec<GridLocation> {
    let cols = (count as f64).sqrt().ceil().max(1.0) as i64;
    let rows = (count as i64 + cols - 1) / cols;
    (0..count as i64)
        .map(|k| {
            let (r, c) = (k / cols, k % cols);
            let x = ((2 * c + 1) * fabric.0) / (2 * cols);
            let y = ((2 * r + 1) * fabric.1) / (2 * rows);
            GridLocation::new(x, y)
        })
        .collect()
}

/// 64-bit FNV-1a, stable across platforms and releases.
fn fnv1a(parts: &[&[u8]]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for part in parts {
        for &b in *part {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        // separator so ("ab","c") and ("a","bc") differ
        h ^= 0xff;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

pub(crate) fn stream_rng(seed: u64, tag: &str, a: &str, b: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(fnv1a(&[
        &seed.to_le_bytes(),
        tag.as_bytes(),
        a.as_bytes(),
        b.as_bytes(),
    ]))
}

/// Per-oscillator parameters drawn from its stream.
#[derive(Debug, Clone, Copy)]
struct RoDraw {
    f0: f64,
    total_shift: f64,
}

fn draw_ro(spec: &FleetSpec, rng: &mut ChaCha8Rng) -> RoDraw {
    let z_f0: f64 = StandardNormal.sample(rng);
    let z_s: f64 = StandardNormal.sample(rng);
    let p = &spec.profile;
    let magnitude = p.total_shift.abs() * (p.shift_spread * z_s).exp();
    RoDraw {
        f0: spec.physical.nominal_frequency() * (1.0 + spec.f0_spread * z_f0),
        total_shift: magnitude.copysign(p.total_shift),
    }
}

struct NoiseGen {
    sigma: f64,
    phi: Option<f64>,
    state: f64,
    started: bool,
}

impl NoiseGen {
    fn new(profile: &DegradationProfile) -> Self {
        Self {
            sigma: profile.noise_sigma,
            phi: profile.noise_ar1,
            state: 0.0,
            started: false,
        }
    }

    fn next(&mut self, rng: &mut ChaCha8Rng) -> f64 {
        if self.sigma == 0.0 {
            return 0.0;
        }
        let z: f64 = StandardNormal.sample(rng);
        self.state = match (self.phi, self.started) {
            (Some(phi), true) => phi * self.state + (1.0 - phi * phi).sqrt() * z,
            _ => z,
        };
        self.started = true;
        self.sigma * self.state
    }
}

/// The per-oscillator total shifts the simulator draws, keyed like the output series.
pub fn drawn_shifts(spec: &FleetSpec) -> Result<Vec<(String, String, f64)>> {
    spec.check()?;
    let mut out = Vec::with_capacity(spec.devices * spec.ros_per_device);
    for d in 0..spec.devices {
        let device_id = FleetSpec::device_id(d);
        for r in 0..spec.ros_per_device {
            let ro_id = FleetSpec::ro_id(r);
            let mut rng = stream_rng(spec.seed, "ro", &device_id, &ro_id);
            let draw = draw_ro(spec, &mut rng);
            out.push((device_id.clone(), ro_id, draw.total_shift));
        }
    }
    Ok(out)
}

fn simulate_ro(
    spec: &FleetSpec,
    d: usize,
    r: usize,
    loc: GridLocation,
    epochs: &[(Timestamp, usize)],
) -> FrequencySeries {
    let device_id = FleetSpec::device_id(d);
    let ro_id = FleetSpec::ro_id(r);
    let mut rng = stream_rng(spec.seed, "ro", &device_id, &ro_id);
    let draw = draw_ro(spec, &mut rng);
    let multiplier = spec.profile.spatial_field.as_ref().map_or(1.0, |f| f.multiplier(loc));
    let shift = draw.total_shift * multiplier + spec.extra_shift(&device_id);
    let mut noise = NoiseGen::new(&spec.profile);

    let n: usize = epochs.iter().map(|e| e.1).sum();
    let mut timestamps = Vec::with_capacity(n);
    let mut frequencies = Vec::with_capacity(n);
    for &(epoch, repeats) in epochs {
        if repeats == 0 {
            // continuous sample: drift evaluated at the sample time
            let g = spec.profile.time_factor(epoch - spec.start);
            timestamps.push(epoch);
            frequencies.push(draw.f0 * (1.0 + shift * g) * (1.0 + noise.next(&mut rng)));
        } else {
            let g = spec.profile.time_factor(epoch - spec.start);
            for k in 0..repeats as i64 {
                timestamps.push(epoch + k * spec.cadence);
                frequencies.push(draw.f0 * (1.0 + shift * g) * (1.0 + noise.next(&mut rng)));
            }
        }
    }
    FrequencySeries::new(device_id, ro_id, loc, timestamps, frequencies)
}

fn simulate_with(spec: &FleetSpec, epochs: &[(Timestamp, usize)]) -> Vec<FrequencySeries> {
    let locations = spec.ro_locations();
    (0..spec.devices * spec.ros_per_device)
        .into_par_iter()
        .map(|k| {
            let (d, r) = (k / spec.ros_per_device, k % spec.ros_per_device);
            simulate_ro(spec, d, r, locations[r], epochs)
        })
        .collect()
}

/// Continuous campaign sampled every `cadence` seconds over `[start, start + span]`.
pub fn simulate_fleet(spec: &FleetSpec) -> Result<FleetDataset> {
    spec.check()?;
    let steps = spec.span / spec.cadence;
    let epochs: Vec<(Timestamp, usize)> = (0..=steps).map(|k| (spec.start + k * spec.cadence, 0)).collect();
    Ok(FleetDataset::continuous(simulate_with(spec, &epochs), spec.cadence))
}

/// Two shutdown campaigns, at `start` and `start + span`, each measuring every
/// oscillator `repeats` times with `cadence` seconds between repeats.
pub fn simulate_shutdowns(spec: &FleetSpec, repeats: usize) -> Result<(FleetDataset, FleetDataset)> {
    spec.check()?;
    if repeats == 0 {
        return Err(Error::invalid("repeats", "must be positive"));
    }
    if repeats as i64 * spec.cadence >= spec.span {
        return Err(Error::invalid("repeats", "repeats do not fit between the two epochs"));
    }
    // one stream per oscillator covers both epochs, so draws stay paired
    let both = simulate_with(spec, &[(spec.start, repeats), (spec.start + spec.span, repeats)]);
    let (initial, last): (Vec<_>, Vec<_>) = both
        .into_iter()
        .map(|s| {
            let mut a = s.clone();
            a.timestamps.truncate(repeats);
            a.frequencies.truncate(repeats);
            let b = FrequencySeries::new(
                s.device_id,
                s.ro_id,
                s.location,
                s.timestamps[repeats..].to_vec(),
                s.frequencies[repeats..].to_vec(),
            );
            (a, b)
        })
        .unzip();
    Ok((FleetDataset::shutdown(initial), FleetDataset::shutdown(last)))
}

/// Nominal level and relative noise of each known covariate.
fn covariate_profile(name: &str) -> (f64, f64) {
    match name {
        "core-1v0-voltage" => (1.0, 0.002),
        "ddr-1v5-voltage" => (1.5, 0.002),
        "rail-1v8-voltage" => (1.8, 0.002),
        "rail-2v5-voltage" => (2.5, 0.002),
        "payload-12v-voltage" => (12.0, 0.003),
        "management-3v3-voltage" => (3.3, 0.002),
        "fpga-die-temperature" => (55.0, 0.01),
        "board-temperature" => (40.0, 0.01),
        "refrigeration-inlet-temperature" => (22.0, 0.01),
        "refrigeration-inner-temperature" => (28.0, 0.01),
        "refrigeration-outlet-temperature" => (32.0, 0.01),
        "rtm-management-current" => (0.3, 0.02),
        "rtm-payload-current" => (2.5, 0.02),
        _ => (1.0, 0.01),
    }
}

/// Environmental covariates for every device: piecewise-constant plateaus with
/// white noise, on the timestamps of the device's oscillator series.
pub fn simulate_covariates(dataset: &FleetDataset, seed: u64) -> Result<Vec<CovariateSeries>> {
    if dataset.campaign != Campaign::Continuous {
        return Err(Error::CovariatesRequireContinuous);
    }
    if dataset.series.iter().all(|s| s.is_empty()) {
        return Err(Error::EmptySample);
    }
    let mut out = Vec::new();
    for device in dataset.device_ids() {
        let mut timestamps: Vec<Timestamp> = dataset
            .series
            .iter()
            .filter(|s| s.device_id == device)
            .flat_map(|s| s.timestamps.iter().copied())
            .collect();
        timestamps.sort_unstable();
        timestamps.dedup();
        if timestamps.is_empty() {
            continue;
        }
        for name in KNOWN_COVARIATES {
            let mut rng = stream_rng(seed, "covariate", device, name);
            let (nominal, rel_noise) = covariate_profile(name);
            let offset: f64 = StandardNormal.sample(&mut rng);
            let mut level = nominal * (1.0 + 0.5 * rel_noise * offset);
            let mut next_change = timestamps[0] + rng.random_range(10..40) * SECONDS_PER_DAY;
            let values = timestamps
                .iter()
                .map(|&t| {
                    if t >= next_change {
                        let jump: f64 = StandardNormal.sample(&mut rng);
                        level = nominal * (1.0 + rel_noise * jump);
                        next_change = t + rng.random_range(10..40) * SECONDS_PER_DAY;
                    }
                    let z: f64 = StandardNormal.sample(&mut rng);
                    level * (1.0 + 0.5 * rel_noise * z)
                })
                .collect();
            out.push(CovariateSeries {
                device_id: device.to_owned(),
                name: name.to_owned(),
                timestamps: timestamps.clone(),
                values,
            });
        }
    }
    Ok(out)
}
