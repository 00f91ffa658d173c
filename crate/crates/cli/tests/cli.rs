use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn roage(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_roage"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("ROAGE_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn ok(out: &Path, args: &[&str]) -> String {
    let o = roage(out, args);
    assert!(
        o.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&o.stderr)
    );
    String::from_utf8(o.stdout).unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn write_config(dir: &Path, body: &str) -> String {
    let p = dir.join("config.json");
    std::fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

const CONTINUOUS: &str = r#"{
  "seed": 11,
  "simulate": { "devices": 2 },
  "backtest": {
    "window": { "kind": "expanding", "initial_days": 40 },
    "horizon_days": 60,
    "step": 24,
    "model": { "model": "theta" },
    "score_days": 60
  }
}"#;

#[test]
fn continuous_pipeline_produces_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cfg = write_config(dir.path(), CONTINUOUS);
    for step in [
        "simulate",
        "trend",
        "shift",
        "outliers",
        "map",
        "trendtest",
        "forecast",
        "backtest",
        "report",
    ] {
        ok(&out, &["--config", &cfg, step]);
    }
    for f in [
        "measurements.csv",
        "covariates.csv",
        "trend.csv",
        "shifts.csv",
        "outliers.csv",
        "map.csv",
        "trendtest.csv",
        "forecast.csv",
        "backtest.csv",
        "backtest_forecasts.csv",
        "report.json",
    ] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
    let report = json(&out.join("report.json"));
    let shift = report["shift"]["median_shift_percent"].as_f64().unwrap();
    assert!(shift < 0.0 && shift > -0.2, "{shift}");
    assert_eq!(report["trend"]["negative_slope_percent"].as_f64(), Some(100.0));
    assert!(report["backtest"]["median_mape_percent"].as_f64().unwrap() < 0.1);

    let shifts = std::fs::read_to_string(out.join("shifts.csv")).unwrap();
    assert_eq!(
        shifts.lines().next(),
        Some("device_id,ro_id,x,y,f0_median,f1_median,delta")
    );
    assert_eq!(shifts.lines().count(), 1 + 16);

    let forecast = json(&out.join("forecast.json"));
    assert_eq!(forecast["horizon_samples"].as_u64(), Some(720));
    let rows = std::fs::read_to_string(out.join("forecast.csv"))
        .unwrap()
        .lines()
        .count();
    assert_eq!(rows, 1 + 16 * 720);
}

#[test]
fn shutdown_anomaly_is_flagged() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cfg = write_config(
        dir.path(),
        r#"{"seed": 5, "campaign": "shutdown",
            "simulate": {"devices": 12, "repeats": 20,
                         "anomalies": [{"device_id": "dev004", "extra_shift": -0.1124}]}}"#,
    );
    for step in ["simulate", "shift", "outliers", "map", "report"] {
        ok(&out, &["--config", &cfg, step]);
    }
    let outliers = json(&out.join("outliers.json"));
    assert_eq!(outliers["flagged"], serde_json::json!(["dev004"]));
    let report = json(&out.join("report.json"));
    assert!(report["outliers"]["max_abs_z"].as_f64().unwrap() > 100.0);
    assert!(report["trend"].is_null());
    // Continuous-only steps refuse shutdown data.
    assert_eq!(roage(&out, &["--config", &cfg, "trend"]).status.code(), Some(2));
}

#[test]
fn report_without_outputs_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = roage(dir.path(), &["report"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("run `roage"));
}

#[test]
fn missing_upstream_names_the_step() {
    let dir = tempfile::tempdir().unwrap();
    let o = roage(dir.path(), &["shift"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("run `roage trend` first"));
    let o = roage(dir.path(), &["outliers"]);
    assert!(String::from_utf8_lossy(&o.stderr).contains("run `roage shift` first"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(roage(dir.path(), &["--help"]).status.code(), Some(0));
    assert_eq!(roage(dir.path(), &["frobnicate"]).status.code(), Some(1));
    assert_eq!(
        roage(dir.path(), &["--campaign", "sometimes", "shift"]).status.code(),
        Some(1)
    );
    // Simulation without a seed.
    assert_eq!(roage(dir.path(), &["simulate"]).status.code(), Some(1));
    let cfg = write_config(dir.path(), r#"{"unknown_key": 1}"#);
    assert_eq!(roage(dir.path(), &["--config", &cfg, "report"]).status.code(), Some(1));
}

#[test]
fn malformed_measurements_report_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("m.csv");
    std::fs::write(
        &csv,
        "device_id,ro_id,x,y,timestamp,frequency_hz\n\
         dev000,ro000,1,2,2023-01-01T00:00:00Z,1.0e8\n\
         dev000,ro000,1,2,2023-01-01T02:00:00Z,not-a-number\n",
    )
    .unwrap();
    let o = roage(dir.path(), &["--input", csv.to_str().unwrap(), "trend"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(
        String::from_utf8_lossy(&o.stderr).contains("line 3"),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"seed": 9, "campaign": "shutdown", "simulate": {"devices": 4, "repeats": 10}}"#,
    );
    let mut runs = Vec::new();
    for name in ["a", "b"] {
        let out = dir.path().join(name);
        for step in ["simulate", "shift", "outliers", "map", "report"] {
            ok(&out, &["--config", &cfg, step]);
        }
        runs.push(out);
    }
    for f in [
        "measurements.csv",
        "shifts.csv",
        "outliers.json",
        "map.csv",
        "report.json",
    ] {
        assert_eq!(
            std::fs::read(runs[0].join(f)).unwrap(),
            std::fs::read(runs[1].join(f)).unwrap(),
            "{f} differs"
        );
    }
}

#[test]
fn checked_in_schema_is_current() {
    let dir = tempfile::tempdir().unwrap();
    let printed = ok(dir.path(), &["schema"]);
    let file = Path::new(env!("CARGO_MANIFEST_DIR")).join("config.schema.json");
    let stored = std::fs::read_to_string(&file).unwrap();
    assert_eq!(
        printed.trim_end(),
        stored.trim_end(),
        "regenerate with `roage schema > {}`",
        file.display()
    );
}
