use cate_bench::{fixture, targets};
use cate_core::ensemble::{fit_stack, LearnerConfig};
use cate_core::learners::{self, ClipBounds, Task};
use cate_core::{engine, EngineConfig, MetaLearner, Strategy, StrategySpec};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

fn base_learners(c: &mut Criterion) {
    let (_, train) = fixture("C", 2000);
    let (y, _) = targets(&train.data);
    let mut group = c.benchmark_group("learner_fit");
    group.sample_size(10);
    for spec in LearnerConfig::desk().candidates {
        group.bench_with_input(BenchmarkId::from_parameter(spec.name()), &spec, |b, spec| {
            b.iter(|| learners::fit(spec, train.data.x.view(), y.view(), None, Task::Regression, 7).unwrap())
        });
    }
    group.finish();
}

fn stacking(c: &mut Criterion) {
    let (_, train) = fixture("C", 1000);
    let (y, d) = targets(&train.data);
    let specs = LearnerConfig::desk().candidates;
    let mut group = c.benchmark_group("stack_fit");
    group.sample_size(10);
    group.bench_function("regression", |b| {
        b.iter(|| fit_stack(&specs, train.data.x.view(), y.view(), None, Task::Regression, 3).unwrap())
    });
    group.bench_function("propensity", |b| {
        let task = Task::Probability(ClipBounds::default());
        b.iter(|| fit_stack(&specs, train.data.x.view(), d.view(), None, task, 3).unwrap())
    });
    group.finish();
}

fn strategies(c: &mut Criterion) {
    let (frame, train) = fixture("A", 1000);
    let config = EngineConfig::learned(LearnerConfig::desk());
    let mut group = c.benchmark_group("cate_fit");
    group.sample_size(10);
    for (learner, strategy) in [
        (MetaLearner::Dr, Strategy::Naive),
        (MetaLearner::Dr, Strategy::Split5050Cf),
        (MetaLearner::R, Strategy::Fold5Combined),
        (MetaLearner::X, Strategy::Fold5Cf),
    ] {
        let id = format!("{}/{}", learner.id(), strategy.id());
        group.bench_function(id, |b| {
            b.iter(|| {
                let fit = engine::fit(
                    &train.data,
                    learner,
                    StrategySpec::new(strategy, 1).unwrap(),
                    &config,
                    5,
                )
                .unwrap();
                black_box(fit.predict(frame.test.data.x.view()).unwrap())
            })
        });
    }
    group.finish();
}

criterion_group!(benches, base_learners, stacking, strategies);
criterion_main!(benches);
