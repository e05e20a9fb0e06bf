use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use ehr_cvd::cohort::{build_cohort, split_folds, CohortOptions, HorizonSet};
use ehr_cvd::ehr_model::EventDefinition;
use ehr_cvd::evaluator::{cross_validate, CvInput, CvOptions, ModelSpec};
use ehr_cvd::par::Exec;
use ehr_cvd::recurrent::{ModelConfig, Variant};
use ehr_cvd::synth::{generate, GeneratorConfig};

fn modes() -> Vec<(&'static str, Exec)> {
    vec![("sequential", Exec::Sequential), ("parallel", Exec::Parallel)]
}

fn bench_generate(c: &mut Criterion) {
    let cfg = GeneratorConfig {
        n_patients: 2000,
        ..Default::default()
    };
    let mut group = c.benchmark_group("generate_2000");
    for (name, exec) in modes() {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| generate(&cfg, exec).unwrap())
        });
    }
    group.finish();
}

fn bench_cv(c: &mut Criterion) {
    let cfg = GeneratorConfig {
        n_patients: 900,
        ..Default::default()
    };
    let (records, _) = generate(&cfg, Exec::Sequential).unwrap();
    let (cohort, _) = build_cohort(
        &records,
        &EventDefinition::default_for(cfg.disease),
        &HorizonSet::default(),
        &CohortOptions::default(),
    )
    .unwrap();
    let folds = split_folds(&cohort, 5, 1).unwrap();
    let input = CvInput {
        cohort: &cohort,
        records: &records,
        folds: &folds,
        truth: None,
    };
    let spec = ModelSpec::Recurrent {
        config: ModelConfig {
            variant: Variant::MtGru,
            n_hidden: 8,
            n_days_pad: 20,
            epochs: 3,
            ..Default::default()
        },
    };
    let mut group = c.benchmark_group("cv_mt_gru_5fold");
    group.sample_size(10);
    for (name, exec) in modes() {
        let opts = CvOptions {
            exec,
            ..Default::default()
        };
        group.bench_with_input(BenchmarkId::from_parameter(name), &opts, |b, opts| {
            b.iter(|| cross_validate(input, &spec, opts).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bench_generate, bench_cv);
criterion_main!(benches);
