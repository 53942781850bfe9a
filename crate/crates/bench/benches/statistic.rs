use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rrit_core::power::independent_normal_sample;
use rrit_core::statistic::{tn_bruteforce, tn_fast, tn_reference, tsup};
use rrit_core::weights::fit_data_driven;
use rrit_core::{pair_arrays, PairArrays};

fn pairs_for(n: usize) -> PairArrays {
    let sample = independent_normal_sample(n, 0xB_EC45).unwrap();
    let (dx, dy) = sample.distance_matrices().unwrap();
    pair_arrays(&dx, &dy).unwrap()
}

fn bench_evaluators(c: &mut Criterion) {
    let mut group = c.benchmark_group("statistic");
    for n in [30usize, 60, 120] {
        let pairs = pairs_for(n);
        let w = fit_data_driven(&pairs).unwrap();
        group.bench_with_input(BenchmarkId::new("fast", n), &pairs, |b, p| {
            b.iter(|| tn_fast(p, &w).unwrap().t)
        });
        group.bench_with_input(BenchmarkId::new("reference", n), &pairs, |b, p| {
            b.iter(|| tn_reference(p, &w).unwrap().t)
        });
        group.bench_with_input(BenchmarkId::new("sup", n), &pairs, |b, p| {
            b.iter(|| tsup(p).unwrap().t)
        });
    }
    // The literal sum is an oracle gated to tiny n.
    let pairs = pairs_for(12);
    let w = fit_data_driven(&pairs).unwrap();
    group.bench_with_input(BenchmarkId::new("bruteforce", 12), &pairs, |b, p| {
        b.iter(|| tn_bruteforce(p, &w).unwrap().t)
    });
    group.finish();
}

criterion_group!(benches, bench_evaluators);
criterion_main!(benches);
