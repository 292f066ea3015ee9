use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use pas_core::cases::{build_case, catalog_case};
use pas_core::copula::{Copula, Family};
use pas_core::empirical::{BandwidthRule, KernelMarginal};
use pas_core::engine::conditional_bootstrap;
use pas_core::numeric::norm_ppf;
use pas_core::par::ExecMode;

const MODES: [(&str, ExecMode); 2] = [
    ("sequential", ExecMode::Sequential),
    ("parallel", ExecMode::Parallel),
];

fn bootstrap_draws(c: &mut Criterion) {
    let copula = Copula::from_tau(Family::Gumbel, 0.7).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (u, v) = copula.sample(120, &mut rng).unwrap();
    let l: Vec<f64> = u.iter().map(|&p| 3.0 + norm_ppf(p)).collect();
    let h: Vec<f64> = v.iter().map(|&p| 5.0 + 2.0 * norm_ppf(p)).collect();
    let f_l = KernelMarginal::fit(&l, BandwidthRule::Silverman).unwrap();
    let f_h = KernelMarginal::fit(&h, BandwidthRule::Silverman).unwrap();
    let pool: Vec<f64> = (1..=12_000)
        .map(|i| 3.0 + norm_ppf(i as f64 / 12_001.0))
        .collect();

    let mut group = c.benchmark_group("bootstrap_draws");
    group.sample_size(10);
    for (name, mode) in MODES {
        group.bench_with_input(BenchmarkId::new(name, 20), &mode, |b, &mode| {
            b.iter(|| {
                conditional_bootstrap(&copula, &f_l, &f_h, &pool, 15_000, 20, 7, 1, mode).unwrap()
            })
        });
    }
    group.finish();
}

fn trace_generation(c: &mut Criterion) {
    let mut spec = catalog_case("C3").unwrap();
    spec.n_seeds = 8;
    let mut group = c.benchmark_group("trace_generation");
    group.sample_size(10);
    for (name, mode) in MODES {
        group.bench_with_input(BenchmarkId::new(name, spec.n_seeds), &mode, |b, &mode| {
            b.iter(|| build_case(&spec, mode).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bootstrap_draws, trace_generation);
criterion_main!(benches);
