use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use neuron_cartographer::erasure::{erasure_curve, LinearProbeScorer};
use neuron_cartographer::numerics::{cca, correlation_matrix, pca};
use neuron_cartographer::ranking::{rank_linreg, rank_maxcorr, rank_mincorr, LinRegOptions};
use neuron_cartographer_bench::{random_dataset, random_matrix};

fn correlation(c: &mut Criterion) {
    let mut group = c.benchmark_group("correlation_matrix");
    for &d in &[64, 256] {
        let a = random_matrix(2000, d, 1);
        let b = random_matrix(2000, d, 2);
        group.bench_with_input(BenchmarkId::from_parameter(d), &d, |bench, _| {
            bench.iter(|| correlation_matrix(&a, &b).unwrap())
        });
    }
    group.finish();
}

fn rankings(c: &mut Criterion) {
    let ds = random_dataset(3, 100, 2000, 3);
    c.bench_function("rank_maxcorr", |b| b.iter(|| rank_maxcorr(&ds, "m0").unwrap()));
    c.bench_function("rank_mincorr", |b| b.iter(|| rank_mincorr(&ds, "m0").unwrap()));
    c.bench_function("rank_linreg", |b| {
        b.iter(|| rank_linreg(&ds, "m0", LinRegOptions::default()).unwrap())
    });
}

fn decompositions(c: &mut Criterion) {
    let a = random_matrix(2000, 100, 4);
    let b = random_matrix(2000, 100, 5);
    c.bench_function("pca_0.99", |bench| bench.iter(|| pca(&a, 0.99).unwrap()));
    c.bench_function("cca", |bench| bench.iter(|| cca(&a, &b, None).unwrap()));
}

fn erasure(c: &mut Criterion) {
    let ds = random_dataset(3, 100, 2000, 6);
    let ranking = rank_maxcorr(&ds, "m0").unwrap();
    let target: Vec<f64> = ds.model("m1").unwrap().activations.column(0);
    let scorer = LinearProbeScorer::new("latent", target);
    let ks = [0, 5, 25];
    c.bench_function("erasure_curve", |b| b.iter(|| erasure_curve(&ds, "m0", &ranking, &ks, &scorer).unwrap()));
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = correlation, rankings, decompositions, erasure
}
criterion_main!(benches);
