use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use tailcal::diagnostics::{resolve_thresholds, uniform_grid, PitRandomizer, TailSample, ThresholdSpec};
use tailcal::inference::ks_excess_pit_test;
use tailcal::scoring::crps;
use tailcal::simlab::{simulate, Scenario};
use tailcal::{ForecastDistribution, ScenarioSpec};

fn trio(n: usize) -> ScenarioSpec {
    ScenarioSpec::new(Scenario::ExponentialTrio { gamma: 0.25, nu: 1.4 }, n, 1)
}

fn bench_simulate(c: &mut Criterion) {
    let mut group = c.benchmark_group("simulate");
    group.sample_size(10);
    for n in [10_000, 100_000] {
        group.bench_with_input(BenchmarkId::new("exponential-trio", n), &n, |b, &n| {
            b.iter(|| simulate(black_box(&trio(n))).unwrap())
        });
    }
    group.finish();
}

fn bench_curves(c: &mut Criterion) {
    let sim = simulate(&trio(100_000)).unwrap();
    let pairs = sim.stream("ideal").unwrap();
    let t = resolve_thresholds(pairs, &[ThresholdSpec::Quantile(0.9)]).unwrap()[0];
    let grid = uniform_grid(101);
    let randomizer = PitRandomizer::new(0);
    c.bench_function("tail_sample_100k", |b| {
        b.iter(|| TailSample::new(black_box(pairs), t, &randomizer).unwrap())
    });
    let sample = TailSample::new(pairs, t, &randomizer).unwrap();
    c.bench_function("combined_curve_101", |b| b.iter(|| sample.combined_curve(black_box(&grid)).unwrap()));
    c.bench_function("ks_test_100k", |b| {
        b.iter(|| ks_excess_pit_test(black_box(pairs), t, &randomizer).unwrap())
    });
}

fn bench_crps(c: &mut Criterion) {
    let gpd = ForecastDistribution::gpd(1.0, 0.25).unwrap();
    let censored = ForecastDistribution::parse("censored_below(logistic(mu=1.2, s=0.8), at=0)").unwrap();
    let members: Vec<f64> = (0..50).map(|i| (i as f64 * 0.37).sin() * 3.0).collect();
    let ensemble = ForecastDistribution::ensemble(members).unwrap();
    c.bench_function("crps_gpd_quadrature", |b| b.iter(|| crps(&gpd, black_box(2.5)).unwrap()));
    c.bench_function("crps_censored_logistic", |b| b.iter(|| crps(&censored, black_box(0.7)).unwrap()));
    c.bench_function("crps_ensemble_50", |b| b.iter(|| crps(&ensemble, black_box(0.3)).unwrap()));
}

fn bench_grammar(c: &mut Criterion) {
    let text = "mixture(0.3 * gpd(sigma=1, xi=0.25), 0.7 * censored_below(logistic(mu=1.2, s=0.8), at=0))";
    let dist = ForecastDistribution::parse(text).unwrap();
    c.bench_function("grammar_parse", |b| b.iter(|| ForecastDistribution::parse(black_box(text)).unwrap()));
    c.bench_function("grammar_print", |b| b.iter(|| black_box(&dist).to_string()));
}

criterion_group!(benches, bench_simulate, bench_curves, bench_crps, bench_grammar);
criterion_main!(benches);
