use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use rcr::{
    enumerate_solutions, presets, ContaminantSidedness, CorrectionTable, CoreShape,
    DistributionAssumption, ExponentialModel, FunctionalRcr, Model, ENSEMBLE_BUDGET,
};

fn bench_enumeration(c: &mut Criterion) {
    let mut group = c.benchmark_group("ensemble");
    group.sample_size(20);
    for &(n, fraction) in &[(51usize, 0.5), (101, 0.5)] {
        let (data, _) = presets::fig4(5, fraction).unwrap();
        let members: Vec<usize> = (0..n.min(data.len())).collect();
        let mut model = ExponentialModel::default();
        model.set_pivot(&rcr::compute_pivot(&data));
        group.bench_with_input(BenchmarkId::new("enumerate", n), &members, |b, m| {
            b.iter(|| enumerate_solutions(black_box(&model), &data, m, ENSEMBLE_BUDGET, 0))
        });
    }
    group.finish();
}

fn bench_functional(c: &mut Criterion) {
    let table = CorrectionTable::builtin();
    let (data, _) = presets::fig4(5, 0.5).unwrap();
    let mut model = ExponentialModel::default();
    model.set_pivot(&rcr::compute_pivot(&data));
    let assumption =
        DistributionAssumption::new(CoreShape::Symmetric, ContaminantSidedness::OneSided);
    let mut group = c.benchmark_group("functional-rcr");
    group.sample_size(10);
    group.bench_function("fig4-n101", |b| {
        b.iter(|| {
            FunctionalRcr::new(assumption, table)
                .seed(5)
                .run(black_box(&model), &data)
        })
    });
    group.finish();
}

criterion_group!(benches, bench_enumeration, bench_functional);
criterion_main!(benches);
