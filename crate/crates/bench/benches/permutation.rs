use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rrit_core::permutation::permutation_pvalue;
use rrit_core::power::independent_normal_sample;
use rrit_core::weights::fit_data_driven;
use rrit_core::{pair_arrays, Estimator, StatKind};

fn bench_permutation(c: &mut Criterion) {
    let mut group = c.benchmark_group("permutation");
    group.sample_size(20);
    for n in [30usize, 100] {
        let sample = independent_normal_sample(n, 0xB_EC45).unwrap();
        let (dx, dy) = sample.distance_matrices().unwrap();
        let w = fit_data_driven(&pair_arrays(&dx, &dy).unwrap()).unwrap();
        group.bench_with_input(BenchmarkId::new("cvm_m199", n), &n, |b, _| {
            b.iter(|| {
                permutation_pvalue(&dx, &dy, &w, StatKind::Cvm, 199, 1, Estimator::Basic)
                    .unwrap()
                    .p_value
            })
        });
    }
    group.finish();
}

criterion_group!(benches, bench_permutation);
criterion_main!(benches);
