use std::hint::black_box;

use cascade_core::abstain::AccuracyModel;
use cascade_core::cascade::{
    greedy_cascade, AccuracyConstraint, ConfidentGenerator, GreedyOptions,
};
use cascade_core::cost::CostFunction;
use cascade_core::data::AccuracyMetric;
use cascade_core::oracle::approximation_suite;
use cascade_core::par::Execution;
use cascade_core::synth::{generate, SynthConfig};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

const MODES: [(&str, Execution); 2] = [
    ("sequential", Execution::Sequential),
    ("parallel", Execution::Parallel),
];

fn greedy_nested_pool(c: &mut Criterion) {
    let data = generate(&SynthConfig::nested_pool(2024)).unwrap();
    let cf = CostFunction::linear_from_manifest(&data.manifest).unwrap();
    let ac = AccuracyConstraint::min_relative(0.99, AccuracyMetric::Top1, &data.reference).unwrap();
    let pool: Vec<(String, AccuracyModel)> = data
        .train
        .model_ids()
        .iter()
        .flat_map(|id| {
            ["logit_gap", "max_prob", "neg_entropy"].map(|f| (id.clone(), AccuracyModel::raw(f)))
        })
        .collect();
    let generator = ConfidentGenerator { pool };
    let r = data.train.all_examples();
    let mut group = c.benchmark_group("greedy_nested_pool");
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| {
                greedy_cascade(
                    black_box(&r),
                    &ac,
                    &cf,
                    &generator,
                    &data.train,
                    GreedyOptions {
                        exec,
                        ensemble_overhead: 0.0,
                    },
                )
                .unwrap()
            })
        });
    }
    group.finish();
}

fn oracle_trials(c: &mut Criterion) {
    let mut group = c.benchmark_group("approximation_suite_200");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| approximation_suite(200, black_box(7), exec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, greedy_nested_pool, oracle_trials);
criterion_main!(benches);
