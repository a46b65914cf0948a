use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use taylorgrad_core::estimators::noise_run;
use taylorgrad_core::highdiff::derivative_table;
use taylorgrad_core::series::{smoothgrad_series, vargrad_series};
use taylorgrad_core::{NoiseSpec, ScoreFunction, Sigma};

const F: &str = "tanh(x1 + 0.5*x2)*x2 + sin(x3)*x1^2";
const X: [f64; 3] = [0.3, -0.2, 0.5];

fn tables(c: &mut Criterion) {
    let f = ScoreFunction::parse(F).unwrap();
    let mut g = c.benchmark_group("derivative_table");
    for order in [2u32, 4, 6, 8] {
        g.bench_with_input(BenchmarkId::from_parameter(order), &order, |b, &order| {
            b.iter(|| derivative_table(&f, black_box(&X), order).unwrap())
        });
    }
    g.finish();
}

fn series(c: &mut Criterion) {
    let f = ScoreFunction::parse(F).unwrap();
    let sigma = Sigma::new(0.05).unwrap();
    let mut g = c.benchmark_group("series");
    for l in [2u32, 4, 6] {
        let table = derivative_table(&f, &X, l + 2).unwrap();
        g.bench_with_input(BenchmarkId::new("smoothgrad", l), &l, |b, &l| {
            b.iter(|| smoothgrad_series(&table, 0, sigma, l).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("vargrad", l), &l, |b, &l| {
            b.iter(|| vargrad_series(&table, 0, sigma, l).unwrap())
        });
    }
    g.finish();
}

fn sampling(c: &mut Criterion) {
    let f = ScoreFunction::parse(F).unwrap();
    let mut g = c.benchmark_group("noise_run");
    g.sample_size(10);
    for n in [10_000u64, 100_000] {
        let noise = NoiseSpec::new(0.05, n, 1).unwrap();
        g.bench_with_input(BenchmarkId::from_parameter(n), &noise, |b, noise| {
            b.iter(|| noise_run(&f, black_box(&X), noise).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, tables, series, sampling);
criterion_main!(benches);
