//! Modified Z-scores over per-device median shifts.
//!
//! Iglewicz and Hoaglin's score, `0.6745 · (x − median) / MAD`, with their
//! mean-absolute-deviation fallback when more than half of the devices sit
//! exactly on the fleet median.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::median;
use crate::trend::ShiftRecord;

/// Normal-consistency constant of the MAD-based score.
pub const MODIFIED_Z_CONSTANT: f64 = 0.6745;
/// Normal-consistency constant of the mean-absolute-deviation fallback.
pub const MEAN_AD_CONSTANT: f64 = 1.253314;
pub const DEFAULT_THRESHOLD: f64 = 3.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceScore {
    pub device_id: String,
    /// Median of the device's oscillator shifts.
    pub median_shift: f64,
    pub z: f64,
    pub flagged: bool,
}

/// Which spread estimate normalised the scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScaleEstimate {
    Mad,
    MeanAbsoluteDeviation,
    /// Every device is on the fleet median; all scores are zero.
    Degenerate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutlierReport {
    /// Sorted by device id.
    pub devices: Vec<DeviceScore>,
    pub fleet_median: f64,
    pub mad: f64,
    pub scale: ScaleEstimate,
    pub threshold: f64,
}

impl OutlierReport {
    pub fn flagged(&self) -> impl Iterator<Item = &DeviceScore> {
        self.devices.iter().filter(|d| d.flagged)
    }

    pub fn score_of(&self, device_id: &str) -> Option<&DeviceScore> {
        self.devices.iter().find(|d| d.device_id == device_id)
    }

    /// Fraction of devices with `|z| > threshold`.
    pub fn share_above(&self, threshold: f64) -> f64 {
        if self.devices.is_empty() {
            return 0.0;
        }
        let n = self.devices.iter().filter(|d| d.z.abs() > threshold).count();
        n as f64 / self.devices.len() as f64
    }
}

/// Groups oscillator shifts by device.
pub fn device_shifts(records: &[ShiftRecord]) -> BTreeMap<String, Vec<f64>> {
    let mut out: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for r in records {
        out.entry(r.device_id.clone()).or_default().push(r.delta);
    }
    out
}

pub fn modified_z_scores(device_shifts: &BTreeMap<String, Vec<f64>>, threshold: f64) -> Result<OutlierReport> {
    if device_shifts.len() < 2 {
        return Err(Error::invalid(
            "device_shifts",
            format!("need at least 2 devices, got {}", device_shifts.len()),
        ));
    }
    if !(threshold >= 0.0) {
        return Err(Error::invalid("threshold", "must be non-negative"));
    }
    let medians = device_shifts
        .iter()
        .map(|(id, shifts)| {
            median(shifts)
                .map(|m| (id.clone(), m))
                .map_err(|e| e.context(id.clone()))
        })
        .collect::<Result<Vec<_>>>()?;
    let values: Vec<f64> = medians.iter().map(|m| m.1).collect();
    let center = median(&values)?;
    let deviations: Vec<f64> = values.iter().map(|v| (v - center).abs()).collect();
    let mad = median(&deviations)?;

    let (scale, denominator) = if mad > 0.0 {
        (ScaleEstimate::Mad, mad / MODIFIED_Z_CONSTANT)
    } else {
        let mean_ad = deviations.iter().sum::<f64>() / deviations.len() as f64;
        if mean_ad > 0.0 {
            (ScaleEstimate::MeanAbsoluteDeviation, MEAN_AD_CONSTANT * mean_ad)
        } else {
            (ScaleEstimate::Degenerate, f64::INFINITY)
        }
    };

    let devices = medians
        .into_iter()
        .map(|(device_id, m)| {
            let z = match scale {
                ScaleEstimate::Mad => MODIFIED_Z_CONSTANT * (m - center) / mad,
                ScaleEstimate::MeanAbsoluteDeviation => (m - center) / denominator,
                ScaleEstimate::Degenerate => 0.0,
            };
            DeviceScore {
                device_id,
                median_shift: m,
                z,
                flagged: z.abs() > threshold,
            }
        })
        .collect();
    Ok(OutlierReport {
        devices,
        fleet_median: center,
        mad,
        scale,
        threshold,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SharePoint {
    pub threshold: f64,
    pub share: f64,
}

/// Share of flagged devices at each threshold.
pub fn outlier_share_curve(report: &OutlierReport, thresholds: &[f64]) -> Vec<SharePoint> {
    thresholds
        .iter()
        .map(|&threshold| SharePoint {
            threshold,
            share: report.share_above(threshold),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn shifts(medians: &[f64]) -> BTreeMap<String, Vec<f64>> {
        medians
            .iter()
            .enumerate()
            .map(|(i, &m)| (format!("dev{i:03}"), vec![m - 1e-5, m, m + 1e-5]))
            .collect()
    }

    #[test]
    fn hand_computed_example() {
        // percent units; the score is scale invariant
        let r = modified_z_scores(&shifts(&[-0.04, -0.05, -0.05, -0.06, -0.20]), 3.5).unwrap();
        assert!((r.fleet_median + 0.05).abs() < 1e-12);
        assert!((r.mad - 0.01).abs() < 1e-12);
        assert_eq!(r.scale, ScaleEstimate::Mad);
        let worst = r.score_of("dev004").unwrap();
        assert!((worst.z + 10.1175).abs() < 1e-9, "{}", worst.z);
        assert!(worst.flagged);
        assert_eq!(r.flagged().count(), 1);
    }

    #[test]
    fn identical_devices_score_zero() {
        let r = modified_z_scores(&shifts(&[-0.05; 6]), 3.5).unwrap();
        assert_eq!(r.scale, ScaleEstimate::Degenerate);
        assert!(r.devices.iter().all(|d| d.z == 0.0 && !d.flagged));
    }

    #[test]
    fn mean_ad_fallback_when_mad_is_zero() {
        // 5 of 7 on the median -> MAD = 0, mean AD = 0.3 / 7
        let r = modified_z_scores(&shifts(&[1.0, 1.0, 1.0, 1.0, 1.0, 1.1, 1.2]), 3.5).unwrap();
        assert_eq!(r.scale, ScaleEstimate::MeanAbsoluteDeviation);
        let z = r.score_of("dev006").unwrap().z;
        let expected = 0.2 / (MEAN_AD_CONSTANT * 0.3 / 7.0);
        assert!((z - expected).abs() < 1e-9);
    }

    #[test]
    fn replacement_device_is_flagged() {
        let mut medians: Vec<f64> = (0..50).map(|i| -5.0e-4 + 2.0e-5 * ((i % 7) as f64 - 3.0)).collect();
        medians[17] = -0.1124;
        let r = modified_z_scores(&shifts(&medians), 3.5).unwrap();
        let z = r.score_of("dev017").unwrap().z;
        assert!(z < -100.0, "{z}");
        assert_eq!(
            r.flagged().map(|d| d.device_id.as_str()).collect::<Vec<_>>(),
            vec!["dev017"]
        );
    }

    #[test]
    fn needs_two_devices() {
        assert!(modified_z_scores(&shifts(&[1.0]), 3.5).is_err());
        let mut empty = shifts(&[1.0, 2.0]);
        empty.insert("devx".into(), vec![]);
        assert!(modified_z_scores(&empty, 3.5).is_err());
    }

    #[test]
    fn share_curve_boundaries() {
        let r = modified_z_scores(&shifts(&[-0.04, -0.05, -0.05, -0.06, -0.20]), 3.5).unwrap();
        let curve = outlier_share_curve(&r, &[0.0, 0.5, 3.5, 11.0]);
        // two devices sit exactly on the fleet median
        assert!((curve[0].share - 0.6).abs() < 1e-12);
        assert!((curve[2].share - 0.2).abs() < 1e-12);
        assert_eq!(curve[3].share, 0.0);
    }

    proptest! {
        #[test]
        fn scores_are_shift_and_scale_invariant(
            medians in prop::collection::vec(-1.0f64..1.0, 3..30),
            c in -10.0f64..10.0,
            k in 0.01f64..100.0,
        ) {
            let base = modified_z_scores(&shifts(&medians), 3.5).unwrap();
            let moved: Vec<f64> = medians.iter().map(|m| k * m + c).collect();
            let other = modified_z_scores(&shifts(&moved), 3.5).unwrap();
            for (a, b) in base.devices.iter().zip(&other.devices) {
                prop_assert!((a.z - b.z).abs() < 1e-6 * (1.0 + a.z.abs()));
            }
            let curve = outlier_share_curve(&base, &[0.0, 0.5, 1.0, 2.0, 3.5, 5.0, 1e9]);
            prop_assert!(curve.windows(2).all(|w| w[1].share <= w[0].share));
        }

        #[test]
        fn most_negative_device_has_most_negative_score(medians in prop::collection::vec(-1.0f64..1.0, 3..30)) {
            let r = modified_z_scores(&shifts(&medians), 3.5).unwrap();
            let by_shift = r.devices.iter().min_by(|a, b| a.median_shift.total_cmp(&b.median_shift)).unwrap();
            let by_z = r.devices.iter().map(|d| d.z).fold(f64::INFINITY, f64::min);
            prop_assert_eq!(by_shift.z, by_z);
        }
    }
}
