use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};

use rankeval_bench::benchmark_dataset;
use rankeval_core::binomial::ConditionalMatrix;
use rankeval_core::em::{em_fit, EmConfig};
use rankeval_core::lstsq::{weighted_rhs, AdjustedSolver};
use rankeval_core::metrics::metric_value;
use rankeval_core::sampling::{simulate_adaptive, simulate_fixed, AdaptiveConfig};
use rankeval_core::{MetricFamily, MetricSpec, RankPmf};

fn bench_simulation(c: &mut Criterion) {
    let dataset = benchmark_dataset(2_000, 20_000);
    c.bench_function("simulate_fixed n=100 M=20k", |b| {
        let mut seed = 0;
        b.iter(|| {
            seed += 1;
            black_box(simulate_fixed(&dataset, 100, seed).unwrap())
        });
    });
    let cfg = AdaptiveConfig::new(100, 3_200).unwrap();
    c.bench_function("simulate_adaptive n0=100 nmax=3200 M=20k", |b| {
        let mut seed = 0;
        b.iter(|| {
            seed += 1;
            black_box(simulate_adaptive(&dataset, &cfg, seed))
        });
    });
}

fn bench_conditional_matrix(c: &mut Criterion) {
    c.bench_function("conditional_matrix n=100 N=2000", |b| {
        b.iter(|| black_box(ConditionalMatrix::binomial(100, 2_000).unwrap()));
    });
}

fn bench_solvers(c: &mut Criterion) {
    let catalog = 2_000;
    let n = 100;
    let prior = RankPmf::uniform(catalog);
    let cond = ConditionalMatrix::binomial(n, catalog).unwrap();

    c.bench_function("mn factorization n=100 N=2000", |b| {
        b.iter(|| black_box(AdjustedSolver::factor_mn(&prior, &cond, 20_000).unwrap()));
    });

    let solver = AdjustedSolver::factor_mn(&prior, &cond, 20_000).unwrap();
    let targets: Vec<Vec<f64>> = (1..=50)
        .map(|k| {
            let spec = MetricSpec::new(MetricFamily::Recall, k).unwrap();
            (1..=catalog).map(|rank| metric_value(spec, rank)).collect()
        })
        .collect();
    c.bench_function("mn batch solve 50 targets", |b| {
        b.iter(|| {
            for target in &targets {
                black_box(solver.solve_rhs(&weighted_rhs(&prior, &cond, target)));
            }
        });
    });
}

fn bench_em(c: &mut Criterion) {
    let dataset = benchmark_dataset(2_000, 20_000);
    let samples = simulate_fixed(&dataset, 100, 7).unwrap();
    let cfg = EmConfig {
        max_iters: 50,
        tol: 1e-300,
        ..EmConfig::default()
    };
    c.bench_function("em_fit 50 iters n=100 N=2000 M=20k", |b| {
        b.iter(|| black_box(em_fit(&samples, 2_000, &cfg).unwrap()));
    });
}

criterion_group!(
    benches,
    bench_simulation,
    bench_conditional_matrix,
    bench_solvers,
    bench_em
);
criterion_main!(benches);
