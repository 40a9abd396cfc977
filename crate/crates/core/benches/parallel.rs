use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use selbo::bnn::{Activation, VariationalMlp};
use selbo::distributions::BetaParams;
use selbo::par::Exec;
use selbo::summary::{discretize_base, BaseMeasure, Partition, DEFAULT_FLOOR};
use selbo::Tensor;

const MODES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

/// Monte Carlo predictive: one forward pass per weight draw.
fn predictive(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let model = VariationalMlp::new(&[784, 128, 64, 2], Activation::Relu, 1.0, &mut rng).unwrap();
    let x = Tensor::full(vec![512, 784], 0.25);
    let noises = model.sample_noise_set(16, &mut rng);
    let mut group = c.benchmark_group("predictive_16_draws");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| model.predictive_with(black_box(&x), &noises, false, exec).unwrap())
        });
    }
    group.finish();
}

/// Region masses of a Beta base over many bins (independent quadratures).
fn discretize(c: &mut Criterion) {
    let partition = Partition::equal_intervals(200).unwrap();
    let beta = BetaParams::new(0.7, 3.0).unwrap();
    let base = BaseMeasure::Beta(beta);
    let bins = partition.bins();
    let mut group = c.benchmark_group("par_map_beta_cdf");
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| {
                selbo::par::map(exec, bins.len(), |i| {
                    beta.cdf(bins[i].upper) - beta.cdf(bins[i].lower)
                })
            })
        });
    }
    group.bench_function("discretize_base", |b| {
        b.iter(|| discretize_base(black_box(&base), &partition, DEFAULT_FLOOR).unwrap())
    });
    group.finish();
}

criterion_group!(benches, predictive, discretize);
criterion_main!(benches);
