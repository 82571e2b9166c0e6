use citebirth::analytics::{fisher_exact_one_sided, ContingencyTable2x2, Direction};
use citebirth::cluster::dbscan_coords;
use citebirth::fit::{fit_mle, log_likelihood};
use citebirth::simulate::{sample_history, stream_rng};
use citebirth::{FitOptions, ModelParams, Window};
use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::Rng;

fn likelihood(c: &mut Criterion) {
    let p = ModelParams::new(3.0, 30.0, 0.05).unwrap();
    let h = sample_history(&p, Window::Finite(50.0), 1);
    c.bench_function(&format!("log_likelihood/{}_events", h.len()), |b| {
        b.iter(|| log_likelihood(black_box(&p), black_box(&h), 50.0).unwrap())
    });
}

fn fitting(c: &mut Criterion) {
    let mut group = c.benchmark_group("fit_mle");
    let options = FitOptions::default();
    for (name, p) in [
        ("fast-hi", ModelParams::new(3.0, 30.0, 0.05).unwrap()),
        ("fast-flat", ModelParams::new(1e-8, 15.0, 0.5).unwrap()),
    ] {
        let h = sample_history(&p, Window::Finite(50.0), 2);
        group.bench_with_input(BenchmarkId::from_parameter(name), &h, |b, h| {
            b.iter(|| fit_mle(black_box(h), 50.0, &options).unwrap())
        });
    }
    group.finish();
}

fn clustering(c: &mut Criterion) {
    let mut group = c.benchmark_group("dbscan");
    group.sample_size(20);
    for n in [1_000usize, 10_000] {
        let mut rng = stream_rng(3, 0);
        let points: Vec<[f64; 3]> = (0..n)
            .map(|i| {
                let centre = (i % 3) as f64 * 3.0;
                [
                    centre + rng.random::<f64>(),
                    centre + rng.random::<f64>(),
                    rng.random::<f64>(),
                ]
            })
            .collect();
        group.bench_with_input(BenchmarkId::from_parameter(n), &points, |b, pts| {
            b.iter(|| dbscan_coords(black_box(pts), 0.5, 50).unwrap())
        });
    }
    group.finish();
}

fn fisher(c: &mut Criterion) {
    let table = ContingencyTable2x2 {
        k11: 2_500,
        k12: 12_000,
        k21: 30_000,
        k22: 400_000,
    };
    c.bench_function("fisher_exact/large", |b| {
        b.iter(|| fisher_exact_one_sided(black_box(&table), Direction::Enrichment))
    });
}

criterion_group!(benches, likelihood, fitting, clustering, fisher);
criterion_main!(benches);
