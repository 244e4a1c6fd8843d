//! Parallel vs sequential replicate execution on the sigma-estimation
//! workload: each replicate samples link configurations on a depth-2 tree
//! and walks the loop of the root.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use loopcrit::linkproc::LinkConfiguration;
use loopcrit::looptracer::walk_reaches_generation;
use loopcrit::parallel::{replicate_rng, run_replicates, run_replicates_seq};
use loopcrit::topology::Graph;

fn sigma_replicate(g: &Graph, beta: f64, per_rep: usize, seed: u64, rep: usize) -> u64 {
    let mut rng = replicate_rng(seed, rep as u64);
    (0..per_rep)
        .filter(|_| {
            let c = LinkConfiguration::sample(g, beta, 1.0, &mut rng);
            walk_reaches_generation(g, &c, g.root(), 0.0, 2)
        })
        .count() as u64
}

fn bench_replicates(c: &mut Criterion) {
    let g = Graph::build_tree(8, 2).unwrap();
    let beta = 0.14;
    let mut group = c.benchmark_group("sigma_replicates");
    group.sample_size(10);
    for &per_rep in &[200usize, 1000] {
        let work = |rep: usize| sigma_replicate(&g, beta, per_rep, 5, rep);
        group.bench_with_input(BenchmarkId::new("parallel", per_rep), &per_rep, |b, _| {
            b.iter(|| black_box(run_replicates(64, work)))
        });
        group.bench_with_input(BenchmarkId::new("sequential", per_rep), &per_rep, |b, _| {
            b.iter(|| black_box(run_replicates_seq(64, work)))
        });
    }
    group.finish();
}

criterion_group!(benches, bench_replicates);
criterion_main!(benches);
