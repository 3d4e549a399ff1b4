use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use privcap_core::covering::{build_covering_instance, covering_experiment};
use privcap_core::divergence::smooth_max_divergence;
use privcap_core::ensemble::Ensemble;
use privcap_core::par;
use privcap_core::random::{random_density, random_probs};

fn ensemble(n: usize, dim: usize, seed: u64) -> Ensemble {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let states = (0..n).map(|_| random_density(&mut rng, dim, dim)).collect();
    let probs = random_probs(&mut rng, n);
    Ensemble::from_states(probs, states).unwrap()
}

fn schedules(c: &mut Criterion) {
    let e = ensemble(4, 4, 7);
    let ci = build_covering_instance(&ensemble(3, 2, 8), 1.0).unwrap();

    let mut g = c.benchmark_group("smooth_max_grid");
    for (name, seq) in [("sequential", true), ("parallel", false)] {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            par::set_sequential(seq);
            b.iter(|| smooth_max_divergence(&e, 0.1, 1e-3).unwrap().value_bits);
        });
    }
    g.finish();

    let mut g = c.benchmark_group("covering_trials");
    g.sample_size(10);
    for (name, seq) in [("sequential", true), ("parallel", false)] {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            par::set_sequential(seq);
            b.iter(|| covering_experiment(&ci, 256, 64, 1).unwrap().mean_deviation);
        });
    }
    g.finish();
    par::set_sequential(false);
}

criterion_group!(benches, schedules);
criterion_main!(benches);
