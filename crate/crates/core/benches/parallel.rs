//! Sequential-versus-parallel timings of the data-parallel kernels:
//! particle evolution, k-nearest-neighbor entropy, sampling, and the
//! finite-difference canonicity sweep.
//!
//! With the default `parallel` feature the "threads=1" arm runs inside a
//! one-worker rayon pool and "threads=N" on the default pool; results are
//! bitwise identical between the two by construction. Build the bench with
//! `--no-default-features` to time the true sequential fallback instead.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};

use liouville_core::distributions::{AnalyticGaussian, Distribution};
use liouville_core::dynamics::{self, Scheme};
use liouville_core::entropy;
use liouville_core::phase_space::{check_canonical, sample_box_points};
use liouville_core::scenarios::{self, HamiltonianDoc};

fn run_arms<F: Fn() + Sync>(c: &mut Criterion, name: &str, f: F) {
    let mut group = c.benchmark_group(name);
    group.sample_size(10);
    #[cfg(feature = "parallel")]
    {
        let single = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .expect("single-thread pool");
        group.bench_function("threads=1", |b| b.iter(|| single.install(&f)));
        group.bench_function(format!("threads={}", rayon::current_num_threads()), |b| {
            b.iter(&f)
        });
    }
    #[cfg(not(feature = "parallel"))]
    {
        group.bench_function("sequential", |b| b.iter(&f));
    }
    group.finish();
}

fn bench_evolve(c: &mut Criterion) {
    let sys = scenarios::build_system(&HamiltonianDoc::named("pendulum")).unwrap();
    let g = AnalyticGaussian::uncorrelated(std::f64::consts::FRAC_PI_2, 0.0, 0.1, 0.1).unwrap();
    let ens = Distribution::Gaussian(g).sample(10_000, 1).unwrap();
    run_arms(c, "evolve_pendulum_10k_x_200_steps", || {
        black_box(dynamics::evolve_ensemble(&sys, &ens, Scheme::Leapfrog, 1e-3, 200).unwrap());
    });
}

fn bench_knn_entropy(c: &mut Criterion) {
    let ens = Distribution::Gaussian(AnalyticGaussian::standard(1))
        .sample(20_000, 2)
        .unwrap();
    run_arms(c, "knn_entropy_20k", || {
        black_box(entropy::entropy_knn(&ens, 4, false, 2).unwrap());
    });
}

fn bench_sampling(c: &mut Criterion) {
    let dist = Distribution::Gaussian(AnalyticGaussian::uncorrelated(0.0, 0.0, 2.0, 0.5).unwrap());
    run_arms(c, "sample_gaussian_100k", || {
        black_box(dist.sample(100_000, 3).unwrap());
    });
}

fn bench_canonical_sweep(c: &mut Criterion) {
    let sys = scenarios::build_system(&HamiltonianDoc::named("quartic")).unwrap();
    let map = dynamics::step_map(&sys, Scheme::Yoshida4, 0.05).unwrap();
    let pts = sample_box_points(1, 500, 2.0, 4);
    run_arms(c, "check_canonical_fd_500_points", || {
        black_box(check_canonical(&map, &pts, 1e-6).unwrap());
    });
}

criterion_group!(
    benches,
    bench_evolve,
    bench_knn_entropy,
    bench_sampling,
    bench_canonical_sweep
);
criterion_main!(benches);
