use std::collections::BTreeMap;
use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use roage_core::backtest::{backtest, BacktestConfig, TrainingWindow};
use roage_core::forecast::{theta_values, ModelSpec, ThetaConfig};
use roage_core::sim::{simulate_fleet, FleetSpec};
use roage_core::spatial::interpolate;
use roage_core::stats::kendall_tau_values;
use roage_core::trend::{ewma_values, half_life_to_alpha};
use roage_core::{FrequencySeries, GridLocation};

fn reference_series() -> FrequencySeries {
    let spec = FleetSpec::reference_continuous(1, 1).unwrap();
    simulate_fleet(&spec).unwrap().series.swap_remove(0)
}

fn kendall(c: &mut Criterion) {
    let series = reference_series();
    let mut group = c.benchmark_group("kendall_tau");
    for n in [500, 3361] {
        let values = &series.frequencies[..n];
        group.bench_with_input(BenchmarkId::from_parameter(n), values, |b, v| {
            b.iter(|| kendall_tau_values(black_box(v), 0.01).unwrap())
        });
    }
    group.finish();
}

fn ewma(c: &mut Criterion) {
    let series = reference_series();
    let alpha = half_life_to_alpha(360.0).unwrap();
    c.bench_function("ewma_3361", |b| {
        b.iter(|| ewma_values(black_box(&series.frequencies), alpha, true))
    });
}

fn theta(c: &mut Criterion) {
    let series = reference_series();
    c.bench_function("theta_fit_forecast_1440", |b| {
        b.iter(|| theta_values(black_box(&series.frequencies[..1440]), 720, &ThetaConfig::default()).unwrap())
    });
}

fn backtest_theta(c: &mut Criterion) {
    let series = reference_series();
    let cfg = BacktestConfig {
        step: 60,
        score_days: Some(100.0),
        ..BacktestConfig::new(
            TrainingWindow::Expanding { initial_days: 40.0 },
            60.0,
            ModelSpec::Theta(ThetaConfig::default()),
        )
    };
    let mut group = c.benchmark_group("backtest");
    group.sample_size(10);
    group.bench_function("theta_expanding", |b| {
        b.iter(|| backtest(black_box(&series), &cfg, 7_200, &[]).unwrap())
    });
    group.finish();
}

fn interpolation(c: &mut Criterion) {
    let sources: BTreeMap<GridLocation, f64> = (0..10)
        .flat_map(|i| (0..10).map(move |j| (GridLocation::new(8 + 16 * i, 12 + 24 * j), -1e-4 * (i * j) as f64)))
        .collect();
    c.bench_function("interpolate_100_sources_46", |b| {
        b.iter(|| interpolate(black_box(&sources), 46).unwrap())
    });
}

criterion_group!(benches, kendall, ewma, theta, backtest_theta, interpolation);
criterion_main!(benches);
