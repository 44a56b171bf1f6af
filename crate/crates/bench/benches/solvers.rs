use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use kcate::dgp::{self, Scenario, ScenarioSpec};
use kcate::selection::{split_three, SelectInputs};
use kcate::{gram_matrix, select, CandidateConfig, DVector, KernelSpec};
use std::hint::black_box;

fn gram(c: &mut Criterion) {
    let mut group = c.benchmark_group("gram");
    for n in [250, 1000] {
        let (data, _) = dgp::generate(&ScenarioSpec::new(Scenario::MultiDense, n, 1.0, 0)).unwrap();
        let spec = KernelSpec::matern(2.5, 2.4);
        group.bench_with_input(BenchmarkId::new("matern25_d10", n), &data.x, |b, x| {
            b.iter(|| gram_matrix(black_box(&spec), black_box(x)).unwrap())
        });
    }
    group.finish();
}

fn solve(c: &mut Criterion) {
    let mut group = c.benchmark_group("krr_fit");
    for n in [250, 1000] {
        let (data, _) = dgp::generate(&ScenarioSpec::new(Scenario::Univariate, n, 1.0, 0)).unwrap();
        let spec = KernelSpec::sobolev(2);
        let y: DVector<f64> = data.y.clone();
        group.bench_with_input(BenchmarkId::new("sobolev2", n), &data.x, |b, x| {
            b.iter(|| kcate::krr::fit(&spec, black_box(x), &y, 1.0 / n as f64).unwrap())
        });
    }
    group.finish();
}

fn selection(c: &mut Criterion) {
    let n = 600;
    let (data, _) = dgp::generate(&ScenarioSpec::new(Scenario::Univariate, n, 1.0, 0)).unwrap();
    let (d1, d2, d3) = split_three(&data, 0).unwrap();
    let candidates: Vec<CandidateConfig> = (1..=10)
        .flat_map(|j| {
            let lambda = 2f64.powi(j - 1) / n as f64;
            [1, 2, 3].map(|m| CandidateConfig::new(format!("s{m}-{j}"), KernelSpec::sobolev(m), lambda))
        })
        .collect();
    let spec_f = KernelSpec::sobolev(1);
    let inputs = SelectInputs {
        bar_lambda: 0.01 / d1.len() as f64,
        tilde_lambda: 0.01 / d2.len() as f64,
        d1: &d1,
        d2: &d2,
        d3: &d3,
        spec_f: &spec_f,
        truncation: 4.0,
    };
    c.bench_function("select_30_candidates_n600", |b| b.iter(|| select(black_box(&candidates), &inputs).unwrap()));
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = gram, solve, selection
}
criterion_main!(benches);
