//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero when any fails. Every tolerance and time budget is pinned here.

use std::collections::BTreeMap;
use std::ops::Range;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use roage_core::backtest::{
    backtest_with, fleet_backtest_runs, historical_forecast_length, summarize_fleet, BacktestConfig, TrainingWindow,
};
use roage_core::forecast::{
    align_covariates, lag_regression_values, theta_values, Forecaster, LagRegressionConfig, ModelSpec, ThetaConfig,
};
use roage_core::sim::{simulate_covariates, simulate_fleet, simulate_shutdowns, AnomalySpec, FleetSpec, SpatialField};
use roage_core::spatial::{interpolate, location_medians};
use roage_core::stats::{
    device_shifts, fleet_slopes, fleet_trend_test, kendall_tau_b, kendall_tau_values, modified_z_scores,
};
use roage_core::trend::{
    fleet_epoch_shifts, fleet_trend, fleet_window_shifts, half_life_in_samples, half_life_to_alpha, EwmaConfig,
    TrendMethod,
};
use roage_core::{median, CovariateSeries, FleetDataset, FrequencySeries, GridLocation, Result as CoreResult};

const DAY: i64 = 86_400;

// Criterion 1
const ALPHA_30_EXPECTED: f64 = 0.0228383;
const ALPHA_30_TOL: f64 = 1e-6;
// Criterion 3
const KENDALL_SERIES: usize = 200;
const KENDALL_MAX_N: usize = 500;
const KENDALL_BUDGET: Duration = Duration::from_secs(10);
// Criterion 4
const Z_HAND_EXPECTED: f64 = -10.1175;
const Z_HAND_TOL: f64 = 1e-9;
const ANOMALY_SHIFT: f64 = -0.1124;
const ANOMALY_MIN_ABS_Z: f64 = 100.0;
const OUTLIER_BUDGET: Duration = Duration::from_secs(5);
// Criterion 5
const FLEET_DEVICES: usize = 50;
const CONFIGURED_SHIFT: f64 = -6.4e-4;
const SHIFT_REL_TOL: f64 = 0.10;
const MIN_NEGATIVE_SLOPES: f64 = 0.90;
const MAX_MEDIAN_TAU: f64 = -0.8;
const MAX_DISCARDED: f64 = 0.05;
const TREND_ALPHA: f64 = 0.01;
const TREND_BUDGET: Duration = Duration::from_secs(120);
// Criterion 6
const HOTSPOT_CENTER: (i64, i64) = (88, 108);
const MAP_RESOLUTION: usize = 46;
const MAP_BUDGET: Duration = Duration::from_secs(10);
// Criterion 7
const FORECAST_TOL: f64 = 1e-9;
const MAX_H: usize = 30;
// Criterion 8
const MAX_MEDIAN_MAPE: f64 = 0.05;
const BACKTEST_BUDGET: Duration = Duration::from_secs(600);
// Criterion 9
const DETERMINISM_BUDGET: Duration = Duration::from_secs(180);

type Outcome = std::result::Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(cond: bool, msg: impl Into<String>) -> std::result::Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn core<T>(r: CoreResult<T>) -> std::result::Result<T, String> {
    r.map_err(|e| e.to_string())
}

fn within_budget(start: Instant, budget: Duration) -> std::result::Result<(), String> {
    let took = start.elapsed();
    check(took <= budget, format!("took {took:.1?}, budget {budget:?}"))
}

fn criterion_1() -> Outcome {
    let one = core(half_life_to_alpha(1.0))?;
    check(one == 0.5, format!("alpha(1) = {one:e}, expected exactly 0.5"))?;
    let thirty = core(half_life_to_alpha(30.0))?;
    let err = (thirty - ALPHA_30_EXPECTED).abs();
    check(
        err <= ALPHA_30_TOL,
        format!("alpha(30) = {thirty:.9}, expected {ALPHA_30_EXPECTED} ± {ALPHA_30_TOL:e} (off by {err:.2e})"),
    )?;
    Ok(format!("alpha(1) = 0.5, alpha(30) = {thirty:.9}"))
}

fn criterion_2() -> Outcome {
    let f = core(historical_forecast_length(280.0, 120.0, 60.0))?;
    check(f == 100.0, format!("F = {f}, expected 100"))?;
    Ok("F(280, 120, 60) = 100".into())
}

/// O(n²) pair classification.
fn brute_tau_b(x: &[f64], y: &[f64]) -> (f64, u64, u64) {
    let n = x.len();
    let (mut c, mut d, mut tx, mut ty) = (0u64, 0u64, 0u64, 0u64);
    for i in 0..n {
        for j in i + 1..n {
            let dx = x[i].partial_cmp(&x[j]).unwrap();
            let dy = y[i].partial_cmp(&y[j]).unwrap();
            use std::cmp::Ordering::Equal;
            if dx == Equal {
                tx += 1;
            }
            if dy == Equal {
                ty += 1;
            }
            if dx != Equal && dy != Equal {
                if dx == dy {
                    c += 1;
                } else {
                    d += 1;
                }
            }
        }
    }
    let total = (n * (n - 1) / 2) as f64;
    let denom = ((total - tx as f64) * (total - ty as f64)).sqrt();
    let tau = if denom > 0.0 {
        (c as f64 - d as f64) / denom
    } else {
        0.0
    };
    (tau, c, d)
}

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for k in 0..KENDALL_SERIES {
        let n = rng.random_range(2..=KENDALL_MAX_N);
        // Coarse grids on some series to exercise ties.
        let levels = if k % 2 == 0 { 1_000_000 } else { rng.random_range(2..20) };
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(0..levels) as f64).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(0..levels) as f64).collect();
        let (tau, counts) = core(kendall_tau_b(&x, &y))?;
        let (bt, bc, bd) = brute_tau_b(&x, &y);
        check(
            tau.to_bits() == bt.to_bits() && counts.concordant == bc && counts.discordant == bd,
            format!("series {k} (n = {n}): tau {tau} vs brute force {bt}"),
        )?;
    }
    for n in [10, 11, 50, 500] {
        let up: Vec<f64> = (0..n).map(|i| i as f64 * 0.5 - 3.0).collect();
        let down: Vec<f64> = up.iter().rev().copied().collect();
        for (values, sign) in [(up, 1.0), (down, -1.0)] {
            let r = core(kendall_tau_values(&values, 0.01))?;
            check(
                r.tau == sign && r.p_value < 0.01,
                format!("monotone n = {n}: tau {} p {}", r.tau, r.p_value),
            )?;
        }
    }
    within_budget(start, KENDALL_BUDGET)?;
    Ok(format!(
        "{KENDALL_SERIES} series identical to brute force; monotone tau = ±1 with p < 0.01 ({:.1?})",
        start.elapsed()
    ))
}

fn criterion_4() -> Outcome {
    // Hand example: ten devices, nine clustered around zero with MAD 0.01 and
    // one at -0.15, so the fleet median is 0 and the outlier sits 0.15 away.
    // Z = 0.6745 * (-0.15 - 0) / 0.01 = -10.1175.
    let hand: BTreeMap<String, Vec<f64>> = [-0.15, -0.02, -0.01, -0.01, 0.0, 0.0, 0.01, 0.01, 0.02, 0.03]
        .iter()
        .enumerate()
        .map(|(i, &v)| (format!("d{i}"), vec![v]))
        .collect();
    let report = core(modified_z_scores(&hand, 3.5))?;
    check(
        report.fleet_median == 0.0 && (report.mad - 0.01).abs() < 1e-15,
        format!("hand example median {} MAD {}", report.fleet_median, report.mad),
    )?;
    let z = report.score_of("d0").unwrap().z;
    check(
        (z - Z_HAND_EXPECTED).abs() <= Z_HAND_TOL,
        format!("hand Z = {z}, expected {Z_HAND_EXPECTED} ± {Z_HAND_TOL:e}"),
    )?;

    let start = Instant::now();
    let mut spec = FleetSpec::reference_shutdown(FLEET_DEVICES, 4);
    let target = FleetSpec::device_id(17);
    spec.anomalies.push(AnomalySpec {
        device_id: target.clone(),
        extra_shift: ANOMALY_SHIFT,
    });
    let (initial, last) = core(simulate_shutdowns(&spec, 100))?;
    let shifts = core(fleet_epoch_shifts(&initial, &last))?;
    let fleet = core(modified_z_scores(&device_shifts(&shifts), 3.5))?;
    let score = fleet.score_of(&target).ok_or("anomalous device missing")?;
    check(score.flagged, format!("{target} not flagged (Z = {})", score.z))?;
    check(
        score.z.abs() > ANOMALY_MIN_ABS_Z,
        format!("{target}: |Z| = {} not above {ANOMALY_MIN_ABS_Z}", score.z.abs()),
    )?;
    within_budget(start, OUTLIER_BUDGET)?;
    Ok(format!(
        "hand Z = {z:.10}; {target} flagged with Z = {:.1} ({:.1?})",
        score.z,
        start.elapsed()
    ))
}

fn reference_fleet() -> std::result::Result<(FleetSpec, FleetDataset), String> {
    let spec = core(FleetSpec::reference_continuous(FLEET_DEVICES, 5))?;
    let data = core(simulate_fleet(&spec))?;
    Ok((spec, data))
}

fn ewma_30d(data: &FleetDataset) -> std::result::Result<FleetDataset, String> {
    let period = core(data.require_continuous())?;
    let half_life = core(half_life_in_samples(30 * DAY, period))?;
    core(fleet_trend(data, &TrendMethod::Ewma(EwmaConfig::new(half_life))))
}

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let (spec, data) = reference_fleet()?;
    check(
        spec.profile.total_shift == CONFIGURED_SHIFT && spec.profile.noise_sigma == 1e-4,
        "reference fleet is not configured as required",
    )?;
    check(
        data.series.len() == FLEET_DEVICES * 8 && data.series[0].len() == 280 * 12 + 1,
        "reference fleet has the wrong shape",
    )?;
    let trend = ewma_30d(&data)?;
    let shifts = core(fleet_window_shifts(&trend, 30 * DAY))?;
    let deltas: Vec<f64> = shifts.iter().map(|s| s.delta).collect();
    let m = core(median(&deltas))?;
    let rel = (m - CONFIGURED_SHIFT).abs() / CONFIGURED_SHIFT.abs();
    check(
        rel <= SHIFT_REL_TOL,
        format!("median shift {m:.4e} is {:.1}% off {CONFIGURED_SHIFT:e}", 100.0 * rel),
    )?;
    let slopes = core(fleet_slopes(&data))?;
    check(
        slopes.share_negative > MIN_NEGATIVE_SLOPES,
        format!("only {:.1}% of slopes negative", 100.0 * slopes.share_negative),
    )?;
    let test = core(fleet_trend_test(&trend, TREND_ALPHA))?;
    let tau = test.median_tau.ok_or("no significant series")?;
    check(tau <= MAX_MEDIAN_TAU, format!("median significant tau {tau}"))?;
    check(
        test.discarded_fraction < MAX_DISCARDED,
        format!("{:.1}% of series discarded", 100.0 * test.discarded_fraction),
    )?;
    within_budget(start, TREND_BUDGET)?;
    Ok(format!(
        "median shift {:.4}% ({:.1}% off), {:.1}% slopes negative, median tau {tau:.4}, {:.1}% discarded ({:.1?})",
        100.0 * m,
        100.0 * rel,
        100.0 * slopes.share_negative,
        100.0 * test.discarded_fraction,
        start.elapsed()
    ))
}

fn criterion_6() -> Outcome {
    let start = Instant::now();
    let mut spec = FleetSpec::reference_shutdown(FLEET_DEVICES, 6);
    spec.profile.spatial_field = Some(SpatialField::Hotspot {
        center: GridLocation::new(HOTSPOT_CENTER.0, HOTSPOT_CENTER.1),
        sigma: 10.0,
        amplitude: 1.0,
    });
    let (initial, last) = core(simulate_shutdowns(&spec, 100))?;
    let shifts = core(fleet_epoch_shifts(&initial, &last))?;
    let sources = core(location_medians(&shifts))?;
    let map = core(interpolate(&sources, MAP_RESOLUTION))?;
    let mut exact = 0;
    for p in map.points() {
        if p.x.fract() == 0.0 && p.y.fract() == 0.0 {
            if let Some(&v) = sources.get(&GridLocation::new(p.x as i64, p.y as i64)) {
                check(
                    p.value == v,
                    format!("map value at ({}, {}) is {} not {v}", p.x, p.y, p.value),
                )?;
                exact += 1;
            }
        }
    }
    check(
        exact == sources.len(),
        format!("only {exact} of {} sources on the grid", sources.len()),
    )?;
    let s = map.summary();
    let dx = map.xs[1] - map.xs[0];
    let dy = map.ys[1] - map.ys[0];
    let (ex, ey) = (
        (s.hotspot.x - HOTSPOT_CENTER.0 as f64).abs(),
        (s.hotspot.y - HOTSPOT_CENTER.1 as f64).abs(),
    );
    check(
        ex <= dx && ey <= dy,
        format!("minimum at ({}, {}), cell {dx} x {dy}", s.hotspot.x, s.hotspot.y),
    )?;
    within_budget(start, MAP_BUDGET)?;
    Ok(format!(
        "{exact} sources exact; minimum at ({}, {}) vs hotspot {HOTSPOT_CENTER:?} ({:.1?})",
        s.hotspot.x,
        s.hotspot.y,
        start.elapsed()
    ))
}

/// SES written out directly: level starts at the first value and the
/// one-step forecast is the final level.
fn ses_one_step(values: &[f64], alpha: f64) -> f64 {
    let mut level = values[0];
    for &v in &values[1..] {
        level = alpha * v + (1.0 - alpha) * level;
    }
    level
}

/// Theta(2) one-step forecast from first principles: half the OLS line one
/// step ahead plus half the SES forecast of the theta-2 line `2y - line`.
fn theta_oracle(values: &[f64], alpha: f64) -> f64 {
    let n = values.len();
    let t: Vec<f64> = (0..n).map(|i| i as f64).collect();
    let tm = t.iter().sum::<f64>() / n as f64;
    let ym = values.iter().sum::<f64>() / n as f64;
    let sxy: f64 = t.iter().zip(values).map(|(a, b)| (a - tm) * (b - ym)).sum();
    let sxx: f64 = t.iter().map(|a| (a - tm) * (a - tm)).sum();
    let b = sxy / sxx;
    let a = ym - b * tm;
    let theta2: Vec<f64> = values.iter().zip(&t).map(|(y, t)| 2.0 * y - (a + b * t)).collect();
    0.5 * (a + b * n as f64) + 0.5 * ses_one_step(&theta2, alpha)
}

fn criterion_7() -> Outcome {
    let ap: Vec<f64> = (0..60).map(|i| 1.0 + 0.5 * i as f64).collect();
    let lag = core(lag_regression_values(
        &ap,
        &[],
        &LagRegressionConfig::new(vec![1]),
        MAX_H,
    ))?;
    let mut worst = 0.0f64;
    for (h, v) in lag.iter().enumerate() {
        let expected = 1.0 + 0.5 * (ap.len() + h) as f64;
        worst = worst.max((v - expected).abs());
    }
    check(worst <= FORECAST_TOL, format!("lag regression off by {worst:e}"))?;

    let constant = vec![1.5e8; 40];
    let (flat, _) = core(theta_values(&constant, MAX_H, &ThetaConfig::default()))?;
    check(
        flat.iter().all(|&v| v == 1.5e8),
        format!("theta on a constant series gave {:?}", &flat[..3]),
    )?;

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst_theta = 0.0f64;
    for _ in 0..50 {
        let n = rng.random_range(10..200);
        let alpha = rng.random_range(1..100) as f64 / 100.0;
        let values: Vec<f64> = (0..n)
            .map(|i| 5.0 - 0.01 * i as f64 + rng.random_range(-1.0..1.0))
            .collect();
        let cfg = ThetaConfig {
            theta: 2.0,
            alpha: Some(alpha),
        };
        let (f, _) = core(theta_values(&values, 1, &cfg))?;
        worst_theta = worst_theta.max((f[0] - theta_oracle(&values, alpha)).abs());
    }
    check(
        worst_theta <= FORECAST_TOL,
        format!("theta vs SES oracle off by {worst_theta:e}"),
    )?;
    Ok(format!(
        "lag error {worst:.1e} over {MAX_H} steps; constant exact; theta vs oracle {worst_theta:.1e}"
    ))
}

/// Returns the realised future; any backtest of it must score zero.
struct Oracle;

impl Forecaster for Oracle {
    fn name(&self) -> String {
        "oracle".into()
    }

    fn forecast_window(
        &self,
        series: &FrequencySeries,
        window: Range<usize>,
        _: &[CovariateSeries],
        horizon: usize,
    ) -> CoreResult<Vec<f64>> {
        Ok(series.frequencies[window.end..window.end + horizon].to_vec())
    }
}

fn criterion_8() -> Outcome {
    let start = Instant::now();
    let (_, data) = reference_fleet()?;
    let mut trend = ewma_30d(&data)?;
    let period = core(trend.require_continuous())?;
    let cfg = |model: ModelSpec| BacktestConfig {
        step: 12,
        score_days: Some(100.0),
        ..BacktestConfig::new(TrainingWindow::Expanding { initial_days: 40.0 }, 60.0, model)
    };

    let oracle = core(backtest_with(
        &trend.series[0],
        &Oracle,
        &cfg(ModelSpec::Naive),
        period,
        &[],
    ))?;
    check(oracle.mape == 0.0, format!("oracle MAPE {}", oracle.mape))?;

    let theta_cfg = cfg(ModelSpec::Theta(ThetaConfig::default()));
    let theta = core(summarize_fleet(
        &theta_cfg,
        &core(fleet_backtest_runs(&trend, &theta_cfg))?,
    ))?;
    check(
        theta.median < MAX_MEDIAN_MAPE,
        format!("theta median MAPE {:.5}%", theta.median),
    )?;
    check(theta.skewness > 0.0, format!("theta MAPE skewness {}", theta.skewness))?;

    trend.covariates = core(simulate_covariates(&trend, 7))?;
    let plain_cfg = cfg(ModelSpec::LagRegression(LagRegressionConfig::new(vec![1])));
    let cov_cfg = cfg(ModelSpec::LagRegression(
        LagRegressionConfig::new(vec![1]).with_covariates(),
    ));
    let plain = core(summarize_fleet(
        &plain_cfg,
        &core(fleet_backtest_runs(&trend, &plain_cfg))?,
    ))?;
    let with_cov = core(summarize_fleet(&cov_cfg, &core(fleet_backtest_runs(&trend, &cov_cfg))?))?;
    // The covariates must actually reach the model.
    let aligned = core(align_covariates(
        &trend.series[0].timestamps,
        &trend
            .covariates_of(&trend.series[0].device_id)
            .cloned()
            .collect::<Vec<_>>(),
    ))?;
    check(!aligned.is_empty(), "no covariates aligned to the fleet")?;
    check(
        with_cov.median >= plain.median,
        format!(
            "covariates improved lag regression: {:.5}% < {:.5}%",
            with_cov.median, plain.median
        ),
    )?;
    within_budget(start, BACKTEST_BUDGET)?;
    Ok(format!(
        "oracle 0; theta median {:.5}% skew {:.3}; lag {:.5}% vs with covariates {:.5}% ({:.1?})",
        theta.median,
        theta.skewness,
        plain.median,
        with_cov.median,
        start.elapsed()
    ))
}

const PIPELINE: [&str; 9] = [
    "simulate",
    "trend",
    "shift",
    "outliers",
    "map",
    "trendtest",
    "forecast",
    "backtest",
    "report",
];

fn run_pipeline(config: &Path, out: &Path) -> std::result::Result<(), String> {
    for step in PIPELINE {
        let o = Command::new(env!("CARGO_BIN_EXE_roage"))
            .arg("--config")
            .arg(config)
            .arg("--out")
            .arg(out)
            .arg(step)
            .env_remove("ROAGE_OUT_DIR")
            .output()
            .map_err(|e| e.to_string())?;
        check(
            o.status.success(),
            format!("`{step}` failed: {}", String::from_utf8_lossy(&o.stderr).trim()),
        )?;
    }
    Ok(())
}

fn criterion_9() -> Outcome {
    let start = Instant::now();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let config = dir.path().join("config.json");
    std::fs::write(
        &config,
        r#"{
  "seed": 2024,
  "simulate": { "devices": 4 },
  "backtest": {
    "window": { "kind": "expanding", "initial_days": 40 },
    "horizon_days": 60,
    "step": 12,
    "model": { "model": "theta" },
    "score_days": 100
  }
}"#,
    )
    .map_err(|e| e.to_string())?;
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    run_pipeline(&config, &a)?;
    run_pipeline(&config, &b)?;
    let mut names: Vec<_> = std::fs::read_dir(&a)
        .map_err(|e| e.to_string())?
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    check(names.len() >= 15, format!("only {} artifacts", names.len()))?;
    for name in &names {
        let x = std::fs::read(a.join(name)).map_err(|e| e.to_string())?;
        let y = std::fs::read(b.join(name)).map_err(|e| e.to_string())?;
        check(x == y, format!("{} differs between runs", name.to_string_lossy()))?;
    }
    within_budget(start, DETERMINISM_BUDGET)?;
    Ok(format!(
        "{} artifacts byte-identical across two runs ({:.1?})",
        names.len(),
        start.elapsed()
    ))
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("half-life to alpha", criterion_1),
        ("historical forecast length", criterion_2),
        ("Kendall tau-b oracle", criterion_3),
        ("modified Z-score", criterion_4),
        ("trend pipeline recovery", criterion_5),
        ("spatial map", criterion_6),
        ("forecasters", criterion_7),
        ("backtesting", criterion_8),
        ("determinism", criterion_9),
    ];
    let only: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let id = i + 1;
        if !only.is_empty() && !only.contains(&id) {
            continue;
        }
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => println!("criterion {id} PASS {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("criterion {id} FAIL {name}: {detail}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
