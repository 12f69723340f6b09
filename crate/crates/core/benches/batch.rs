//! Batch bisimulation throughput: the rayon path (`check_all` with the
//! `parallel` feature) against the sequential fallback.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use fpgavirt_core::bisim::{check_all, check_sequential, Case};
use fpgavirt_core::{corpus, fuzz};

fn cases() -> Vec<Case> {
    let mut v: Vec<Case> = (0..64).map(|s| fuzz::generate(s).into()).collect();
    v.extend(corpus::all_cases(0));
    v
}

fn batch(c: &mut Criterion) {
    let cases = cases();
    let mut g = c.benchmark_group("bisim-batch");
    g.sample_size(10);
    g.bench_with_input(BenchmarkId::new("sequential", cases.len()), &cases, |b, cs| {
        b.iter(|| check_sequential(cs))
    });
    g.bench_with_input(BenchmarkId::new("check_all", cases.len()), &cases, |b, cs| {
        b.iter(|| check_all(cs))
    });
    g.finish();
}

criterion_group!(benches, batch);
criterion_main!(benches);
