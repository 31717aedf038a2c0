use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use mfcf::gain::{gaussian_gain, GainConfig, GainMode};
use mfcf::gaussian::{assemble_precision, shrunk_precision};
use mfcf::mfcf::mfcf;
use mfcf::{MfcfConfig, TargetKind, VertexSet};
use mfcf_bench::{correlation, forest, input};

fn search(c: &mut Criterion) {
    let mut g = c.benchmark_group("mfcf");
    for p in [20, 50, 100] {
        let corr = correlation(p, 2 * p, 1);
        let x = input(&corr);
        for (name, mode) in [
            ("similarity", GainMode::Similarity),
            ("loglik", GainMode::GaussLoglik),
            ("loglik-val", GainMode::GaussLoglikValidated),
        ] {
            let cfg = MfcfConfig {
                min_clique_size: 1,
                max_clique_size: 6,
                gain: GainConfig { mode, ..Default::default() },
                ..Default::default()
            };
            g.bench_with_input(BenchmarkId::new(name, p), &x, |b, x| b.iter(|| mfcf(black_box(x), &cfg).unwrap()));
        }
    }
    g.finish();
}

fn assembly(c: &mut Criterion) {
    let mut g = c.benchmark_group("assembly");
    for p in [30, 100] {
        let corr = correlation(p, 2 * p, 2);
        let f = forest(p, 2);
        g.bench_function(BenchmarkId::new("mle", p), |b| b.iter(|| assemble_precision(black_box(corr.values()), &f).unwrap()));
        g.bench_function(BenchmarkId::new("clique-tree-target", p), |b| {
            b.iter(|| shrunk_precision(black_box(&corr), &f, 0.3, TargetKind::CliqueTree).unwrap())
        });
    }
    g.finish();
}

fn gain(c: &mut Criterion) {
    let corr = correlation(30, 60, 3);
    let clique = VertexSet::new(0..20);
    c.bench_function("gaussian_gain/20", |b| {
        b.iter(|| gaussian_gain(black_box(corr.values()), &clique, 25, 19).unwrap())
    });
}

criterion_group!(benches, search, assembly, gain);
criterion_main!(benches);
