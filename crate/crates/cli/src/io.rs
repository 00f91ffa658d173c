//! CSV and JSON formats.
//!
//! Measurements: `device_id,ro_id,x,y,timestamp,frequency_hz`.
//! Covariates: `device_id,name,timestamp,value`.
//! Timestamps are ISO-8601 in UTC, e.g. `2023-01-01T00:00:00Z`.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use chrono::{DateTime, SecondsFormat, Utc};
use roage_core::model::{is_known_covariate, CUSTOM_COVARIATE_PREFIX};
use roage_core::trend::{resample_regular, ShiftRecord};
use roage_core::{validate, Campaign, CovariateSeries, FleetDataset, FrequencySeries, GridLocation, Timestamp};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::CliError;

pub const MEASUREMENT_HEADER: [&str; 6] = ["device_id", "ro_id", "x", "y", "timestamp", "frequency_hz"];
pub const COVARIATE_HEADER: [&str; 4] = ["device_id", "name", "timestamp", "value"];
pub const SHIFT_HEADER: [&str; 7] = ["device_id", "ro_id", "x", "y", "f0_median", "f1_median", "delta"];

pub fn format_time(t: Timestamp) -> String {
    DateTime::<Utc>::from_timestamp(t, 0)
        .map(|d| d.to_rfc3339_opts(SecondsFormat::Secs, true))
        .unwrap_or_else(|| t.to_string())
}

pub fn parse_time(s: &str) -> Result<Timestamp, String> {
    DateTime::parse_from_rfc3339(s.trim())
        .map(|d| d.with_timezone(&Utc).timestamp())
        .map_err(|e| format!("invalid ISO-8601 timestamp `{s}`: {e}"))
}

fn open(path: &Path) -> Result<File, CliError> {
    File::open(path).map_err(|e| CliError::io(path, e))
}

fn csv_reader<R: Read>(reader: R, expected: &[&str], source: &str) -> Result<csv::Reader<R>, CliError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| CliError::Data(format!("{source}: line 1: {e}")))?
        .clone();
    if header.iter().ne(expected.iter().copied()) {
        return Err(CliError::Data(format!(
            "{source}: line 1: expected header `{}`, found `{}`",
            expected.join(","),
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    Ok(rdr)
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, name: &str) -> Result<T, String>
where
    T::Err: std::fmt::Display,
{
    let raw = rec.get(i).unwrap_or("");
    raw.trim().parse().map_err(|e| format!("invalid {name} `{raw}`: {e}"))
}

fn records<R: Read>(
    rdr: &mut csv::Reader<R>,
    source: &str,
    mut row: impl FnMut(u64, &csv::StringRecord) -> Result<(), String>,
) -> Result<(), CliError> {
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            CliError::Data(format!("{source}: line {line}: malformed row: {e}"))
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        row(line, &rec).map_err(|m| CliError::Data(format!("{source}: line {line}: {m}")))?;
    }
    Ok(())
}

/// Parses measurement rows into series ordered by `(device_id, ro_id)`.
pub fn read_measurements<R: Read>(reader: R, source: &str) -> Result<Vec<FrequencySeries>, CliError> {
    let mut rdr = csv_reader(reader, &MEASUREMENT_HEADER, source)?;
    let mut series: BTreeMap<(String, String), FrequencySeries> = BTreeMap::new();
    records(&mut rdr, source, |_, rec| {
        let device: String = field(rec, 0, "device_id")?;
        let ro: String = field(rec, 1, "ro_id")?;
        if device.is_empty() || ro.is_empty() {
            return Err("empty device_id or ro_id".into());
        }
        let location = GridLocation::new(field(rec, 2, "x")?, field(rec, 3, "y")?);
        if !location.is_valid() {
            return Err(format!("negative location {location}"));
        }
        let t = parse_time(rec.get(4).unwrap_or(""))?;
        let f: f64 = field(rec, 5, "frequency_hz")?;
        if !f.is_finite() || f <= 0.0 {
            return Err(format!("frequency must be positive and finite, got {f}"));
        }
        let s = series
            .entry((device.clone(), ro.clone()))
            .or_insert_with(|| FrequencySeries::new(device, ro, location, Vec::new(), Vec::new()));
        if s.location != location {
            return Err(format!("{} moved from {} to {location}", s.label(), s.location));
        }
        if let Some(&last) = s.timestamps.last() {
            if t <= last {
                return Err(format!(
                    "non-monotonic timestamps: {} is not after {} for {}",
                    format_time(t),
                    format_time(last),
                    s.label()
                ));
            }
        }
        s.timestamps.push(t);
        s.frequencies.push(f);
        Ok(())
    })?;
    Ok(series.into_values().collect())
}

/// Parses covariate rows; unknown names are kept under the custom namespace
/// and reported as warnings.
pub fn read_covariates<R: Read>(reader: R, source: &str) -> Result<(Vec<CovariateSeries>, Vec<String>), CliError> {
    let mut rdr = csv_reader(reader, &COVARIATE_HEADER, source)?;
    let mut series: BTreeMap<(String, String), CovariateSeries> = BTreeMap::new();
    let mut warned: BTreeMap<String, u64> = BTreeMap::new();
    records(&mut rdr, source, |line, rec| {
        let device: String = field(rec, 0, "device_id")?;
        let raw: String = field(rec, 1, "name")?;
        let name = if is_known_covariate(&raw) || raw.starts_with(CUSTOM_COVARIATE_PREFIX) {
            raw
        } else {
            warned.entry(raw.clone()).or_insert(line);
            format!("{CUSTOM_COVARIATE_PREFIX}{raw}")
        };
        let t = parse_time(rec.get(2).unwrap_or(""))?;
        let v: f64 = field(rec, 3, "value")?;
        if !v.is_finite() {
            return Err(format!("non-finite value {v}"));
        }
        let s = series
            .entry((device.clone(), name.clone()))
            .or_insert_with(|| CovariateSeries {
                device_id: device,
                name,
                timestamps: Vec::new(),
                values: Vec::new(),
            });
        if let Some(&last) = s.timestamps.last() {
            if t <= last {
                return Err(format!(
                    "non-monotonic timestamps: {} is not after {} for {}/{}",
                    format_time(t),
                    format_time(last),
                    s.device_id,
                    s.name
                ));
            }
        }
        s.timestamps.push(t);
        s.values.push(v);
        Ok(())
    })?;
    let warnings = warned
        .into_iter()
        .map(|(name, line)| {
            format!("{source}: line {line}: unknown covariate `{name}`, kept as `{CUSTOM_COVARIATE_PREFIX}{name}`")
        })
        .collect();
    Ok((series.into_values().collect(), warnings))
}

/// Most common spacing between consecutive samples.
fn infer_period(series: &[FrequencySeries]) -> Option<i64> {
    let mut counts: BTreeMap<i64, usize> = BTreeMap::new();
    for s in series {
        for w in s.timestamps.windows(2) {
            *counts.entry(w[1] - w[0]).or_default() += 1;
        }
    }
    counts
        .into_iter()
        .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
        .map(|(p, _)| p)
}

pub struct Ingested {
    pub dataset: FleetDataset,
    pub warnings: Vec<String>,
}

/// Reads and validates a measurement file and optional covariates.
pub fn ingest(
    measurements: &Path,
    covariates: Option<&Path>,
    campaign: Campaign,
    resample: bool,
) -> Result<Ingested, CliError> {
    let source = measurements.display().to_string();
    let mut series = read_measurements(open(measurements)?, &source)?;
    if series.is_empty() {
        return Err(CliError::Data(format!("{source}: no measurements")));
    }
    let mut warnings = Vec::new();
    let mut dataset = match campaign {
        Campaign::Shutdown => FleetDataset::shutdown(series),
        Campaign::Continuous => {
            let period = infer_period(&series)
                .ok_or_else(|| CliError::Data(format!("{source}: every series has a single sample")))?;
            let irregular = series
                .iter()
                .filter(|s| s.timestamps.windows(2).any(|w| w[1] - w[0] != period))
                .count();
            if resample {
                series = series
                    .iter()
                    .map(|s| resample_regular(s, period))
                    .collect::<Result<_, _>>()?;
            } else if irregular > 0 {
                warnings.push(format!(
                    "{source}: {irregular} series deviate from the {period} s sampling period; consider --resample"
                ));
            }
            FleetDataset::continuous(series, period)
        }
    };
    if let Some(path) = covariates {
        if campaign != Campaign::Continuous {
            return Err(roage_core::Error::CovariatesRequireContinuous.into());
        }
        let (covs, w) = read_covariates(open(path)?, &path.display().to_string())?;
        dataset.covariates = covs;
        warnings.extend(w);
    }
    let violations = validate(&dataset);
    if !violations.is_empty() {
        let shown: Vec<String> = violations.iter().take(5).map(|v| v.to_string()).collect();
        return Err(CliError::Data(format!(
            "{source}: {} invariant violations: {}",
            violations.len(),
            shown.join("; ")
        )));
    }
    Ok(Ingested { dataset, warnings })
}

fn create(path: &Path) -> Result<csv::Writer<BufWriter<File>>, CliError> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    Ok(csv::Writer::from_writer(BufWriter::new(file)))
}

fn finish(mut w: csv::Writer<BufWriter<File>>, path: &Path) -> Result<(), CliError> {
    w.flush().map_err(|e| CliError::io(path, e))
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> CliError + '_ {
    move |e| CliError::Data(format!("{}: {e}", path.display()))
}

/// Writes rows of pre-formatted fields under `header`.
pub fn write_rows<I, R>(path: &Path, header: &[&str], rows: I) -> Result<(), CliError>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator,
    R::Item: AsRef<[u8]>,
{
    let mut w = create(path)?;
    w.write_record(header).map_err(csv_err(path))?;
    for row in rows {
        w.write_record(row).map_err(csv_err(path))?;
    }
    finish(w, path)
}

pub fn write_measurements(path: &Path, series: &[FrequencySeries]) -> Result<(), CliError> {
    write_rows(
        path,
        &MEASUREMENT_HEADER,
        series.iter().flat_map(|s| {
            s.timestamps.iter().zip(&s.frequencies).map(move |(&t, &f)| {
                [
                    s.device_id.clone(),
                    s.ro_id.clone(),
                    s.location.x.to_string(),
                    s.location.y.to_string(),
                    format_time(t),
                    f.to_string(),
                ]
            })
        }),
    )
}

pub fn write_covariates(path: &Path, covariates: &[CovariateSeries]) -> Result<(), CliError> {
    write_rows(
        path,
        &COVARIATE_HEADER,
        covariates.iter().flat_map(|c| {
            c.timestamps
                .iter()
                .zip(&c.values)
                .map(move |(&t, &v)| [c.device_id.clone(), c.name.clone(), format_time(t), v.to_string()])
        }),
    )
}

pub fn write_shifts(path: &Path, records: &[ShiftRecord]) -> Result<(), CliError> {
    write_rows(
        path,
        &SHIFT_HEADER,
        records.iter().map(|r| {
            [
                r.device_id.clone(),
                r.ro_id.clone(),
                r.location.x.to_string(),
                r.location.y.to_string(),
                r.f0_median.to_string(),
                r.f1_median.to_string(),
                r.delta.to_string(),
            ]
        }),
    )
}

pub fn read_shifts(path: &Path) -> Result<Vec<ShiftRecord>, CliError> {
    let source = path.display().to_string();
    let mut rdr = csv_reader(open(path)?, &SHIFT_HEADER, &source)?;
    let mut out = Vec::new();
    records(&mut rdr, &source, |_, rec| {
        out.push(ShiftRecord {
            device_id: field(rec, 0, "device_id")?,
            ro_id: field(rec, 1, "ro_id")?,
            location: GridLocation::new(field(rec, 2, "x")?, field(rec, 3, "y")?),
            f0_median: field(rec, 4, "f0_median")?,
            f1_median: field(rec, 5, "f1_median")?,
            delta: field(rec, 6, "delta")?,
        });
        Ok(())
    })?;
    Ok(out)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    w.write_all(b"\n")
        .and_then(|_| w.flush())
        .map_err(|e| CliError::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn time_round_trip() {
        assert_eq!(format_time(1_672_531_200), "2023-01-01T00:00:00Z");
        assert_eq!(parse_time("2023-01-01T00:00:00Z"), Ok(1_672_531_200));
        assert_eq!(parse_time("2023-01-01T02:00:00+02:00"), Ok(1_672_531_200));
        assert!(parse_time("yesterday").is_err());
    }

    #[test]
    fn three_valid_rows() {
        let csv = "device_id,ro_id,x,y,timestamp,frequency_hz\n\
                   dev0,ro0,82,96,2023-01-01T00:00:00Z,200000000\n\
                   dev0,ro0,82,96,2023-01-01T02:00:00Z,199999990.5\n\
                   dev0,ro0,82,96,2023-01-01T04:00:00Z,199999980\n";
        let s = read_measurements(csv.as_bytes(), "m.csv").unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].len(), 3);
        assert_eq!(s[0].location, GridLocation::new(82, 96));
        assert_eq!(s[0].frequencies[1], 199_999_990.5);
    }

    #[test]
    fn errors_name_the_line() {
        let bad_freq = "device_id,ro_id,x,y,timestamp,frequency_hz\n\
                        dev0,ro0,1,1,2023-01-01T00:00:00Z,1\n\
                        dev0,ro0,1,1,2023-01-01T02:00:00Z,0\n";
        let err = read_measurements(bad_freq.as_bytes(), "m.csv").unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
        assert_eq!(err.exit_code(), 2);

        let backwards = "device_id,ro_id,x,y,timestamp,frequency_hz\n\
                         dev0,ro0,1,1,2023-01-01T02:00:00Z,1\n\
                         dev0,ro0,1,1,2023-01-01T00:00:00Z,1\n";
        let err = read_measurements(backwards.as_bytes(), "m.csv")
            .unwrap_err()
            .to_string();
        assert!(err.contains("line 3") && err.contains("non-monotonic"), "{err}");

        let header = "device,ro_id,x,y,timestamp,frequency_hz\n";
        assert!(read_measurements(header.as_bytes(), "m.csv")
            .unwrap_err()
            .to_string()
            .contains("line 1"));

        let short = "device_id,ro_id,x,y,timestamp,frequency_hz\ndev0,ro0,1\n";
        assert!(read_measurements(short.as_bytes(), "m.csv")
            .unwrap_err()
            .to_string()
            .contains("line 2"));
    }

    #[test]
    fn unknown_covariate_is_kept_with_warning() {
        let csv = "device_id,name,timestamp,value\n\
                   dev0,board-temperature,2023-01-01T00:00:00Z,41.5\n\
                   dev0,fan-speed,2023-01-01T00:00:00Z,1200\n";
        let (covs, warnings) = read_covariates(csv.as_bytes(), "c.csv").unwrap();
        assert_eq!(covs.len(), 2);
        assert!(covs.iter().any(|c| c.name == "custom:fan-speed"));
        assert_eq!(warnings.len(), 1);
        assert!(warnings[0].contains("line 3") && warnings[0].contains("fan-speed"));
    }
}
