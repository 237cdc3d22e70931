use std::time::Duration;

use criterion::{BenchmarkId, Criterion};

use csa_core::apps::{run_kmeans, run_sparse_pca, KmeansInstance, RowCoreset, RunOptions, SparsePcaInstance};
use csa_core::engine::{coreset_guess_solve, SolveConfig};
use csa_core::linalg::DenseMatrix;
use csa_core::netgen::NetKind;
use csa_core::parallel::Parallelism;
use csa_core::rng::{gaussian_matrix, stream};
use csa_core::solvers::ConstraintSpec;

fn policies() -> [(&'static str, Parallelism); 2] {
    [("sequential", Parallelism::Sequential), ("rayon", Parallelism::Threads(0))]
}

fn random(d: usize, n: usize, seed: u64) -> DenseMatrix {
    DenseMatrix::new(gaussian_matrix(d, n, &mut stream(seed, "bench", 0))).unwrap()
}

fn bench_net_scan(c: &mut Criterion) {
    let a = random(4, 20, 1);
    let mut group = c.benchmark_group("net_scan");
    for prune in [false, true] {
        for (name, par) in policies() {
            let mut cfg = SolveConfig::new(2, 2.0, 0.5, 0.5);
            cfg.prune = prune;
            cfg.parallelism = par;
            let label = if prune { "branch_and_bound" } else { "full_scan" };
            group.bench_function(BenchmarkId::new(label, name), |b| {
                b.iter(|| coreset_guess_solve(&a, &ConstraintSpec::Unconstrained { k: 2 }, &cfg, NetKind::Standard).unwrap())
            });
        }
    }
    group.finish();
}

fn bench_kmeans(c: &mut Criterion) {
    let inst = KmeansInstance {
        points: random(14, 3, 2),
        k: 2,
        epsilon: 0.5,
        row_coreset: RowCoreset::None,
    };
    let mut group = c.benchmark_group("kmeans_assignments");
    for (name, par) in policies() {
        let opts = RunOptions {
            parallelism: par,
            ..RunOptions::default()
        };
        group.bench_function(name, |b| b.iter(|| run_kmeans(&inst, &opts).unwrap()));
    }
    group.finish();
}

fn bench_sparse_pca(c: &mut Criterion) {
    let inst = SparsePcaInstance {
        a: random(16, 30, 3),
        k: 2,
        s_rows: 5,
        epsilon: 0.5,
        identity_coreset: true,
    };
    let mut group = c.benchmark_group("sparse_pca_supports");
    for (name, par) in policies() {
        let opts = RunOptions {
            parallelism: par,
            ..RunOptions::default()
        };
        group.bench_function(name, |b| b.iter(|| run_sparse_pca(&inst, &opts).unwrap()));
    }
    group.finish();
}

fn main() {
    let mut c = Criterion::default()
        .warm_up_time(Duration::from_millis(500))
        .measurement_time(Duration::from_secs(3))
        .sample_size(10)
        .configure_from_args();
    bench_net_scan(&mut c);
    bench_kmeans(&mut c);
    bench_sparse_pca(&mut c);
    c.final_summary();
}
