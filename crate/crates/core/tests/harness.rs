use kcate::config::{presets, Method};
use kcate::dgp::{self, Scenario, ScenarioSpec};
use kcate::harness::crossfit::{cross_fit_average, rotation_folds, CrossFitPipeline};
use kcate::harness::diagnostics::{effective_dimension, leverage_scores};
use kcate::harness::experiment::{run_experiment, MethodSettings};
use kcate::harness::ingest::ingest_reader;
use kcate::harness::rates::rate_sweep;
use kcate::harness::report::write_report_csv;
use kcate::selection::{self, SelectInputs};
use kcate::{gram_matrix, CandidateConfig, CatePredictor, DMatrix, KernelSpec};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rank_d_gram(n: usize, d: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let f = DMatrix::from_fn(n, d, |_, _| rng.random_range(-1.0..1.0));
    &f * f.transpose()
}

#[test]
fn effective_dimension_of_rank_d_gram_tends_to_d() {
    for d in [1, 3, 7] {
        let g = rank_d_gram(30, d, d as u64);
        let e = effective_dimension(&g, 1e-9).unwrap();
        assert!((e - d as f64).abs() < 1e-4, "rank {d}: {e}");
    }
    let n = 12;
    let g = DMatrix::identity(n, n) * n as f64;
    assert!((effective_dimension(&g, 1.0).unwrap() - 6.0).abs() < 1e-12);
}

#[test]
fn leverage_scores_sum_to_effective_dimension() {
    let x = DMatrix::from_fn(25, 1, |i, _| i as f64 / 24.0);
    let g = gram_matrix(&KernelSpec::sobolev(2), &x).unwrap();
    let lambda = 1e-3;
    let total: f64 = leverage_scores(&g, lambda).unwrap().iter().sum();
    assert!((total - effective_dimension(&g, lambda).unwrap()).abs() < 1e-9);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn effective_dimension_decreases_and_is_bounded_by_rank(seed in 0u64..1000, n in 5usize..60, d in 1usize..5, l in -4.0f64..1.0) {
        let g = rank_d_gram(n, d.min(n), seed);
        let lo = effective_dimension(&g, 10f64.powf(l)).unwrap();
        let hi = effective_dimension(&g, 10f64.powf(l + 0.5)).unwrap();
        prop_assert!(hi < lo);
        prop_assert!(lo <= d.min(n) as f64 + 1e-9);
    }
}

#[test]
fn cross_fit_average_equals_an_independent_rerun() {
    let spec = ScenarioSpec::new(Scenario::Univariate, 150, 1.0, 4);
    let (data, _) = dgp::generate(&spec).unwrap();
    let candidates = vec![
        CandidateConfig::new("a", KernelSpec::sobolev(2), 1e-3),
        CandidateConfig::new("b", KernelSpec::sobolev(2), 1e-1),
    ];
    let pipeline = CrossFitPipeline::new(candidates.clone(), KernelSpec::sobolev(1), 4.0);
    let model = cross_fit_average(&data, &pipeline, 13).unwrap();
    let xq = DMatrix::from_fn(20, 1, |i, _| i as f64 / 19.0);
    let got = model.predict_cate(&xq).unwrap();

    let folds = rotation_folds(data.len(), 13);
    let mut acc = kcate::DVector::zeros(20);
    for r in 0..3 {
        let d1 = data.subset(&folds[r]);
        let d2 = data.subset(&folds[(r + 1) % 3]);
        let d3 = data.subset(&folds[(r + 2) % 3]);
        let out = selection::select(
            &candidates,
            &SelectInputs {
                bar_lambda: 0.01 / d1.len() as f64,
                tilde_lambda: 0.01 / d2.len() as f64,
                d1: &d1,
                d2: &d2,
                d3: &d3,
                spec_f: &KernelSpec::sobolev(1),
                truncation: 4.0,
            },
        )
        .unwrap();
        acc += out.selected().predict_cate(&xq).unwrap();
    }
    assert!((got - acc / 3.0).amax() < 1e-12);
    assert_eq!(model.successful().count(), 3);
}

#[test]
fn zero_predictor_rate_is_flat() {
    let cfg = presets::univariate(100, 4, 0);
    let settings = MethodSettings::from_config(&cfg);
    let base = ScenarioSpec::new(Scenario::Univariate, 100, 1.0, 0);
    let sweep = rate_sweep(&base, Method::Zero, &settings, &[100, 200, 400, 800], 4, 0, 500).unwrap();
    assert!(sweep.slope.abs() < 0.1, "slope {}", sweep.slope);
}

/// With the stage-2 kernel restricted to the four active coordinates the
/// error falls faster in n than with the ten-coordinate kernel.
#[test]
fn subset_kernel_rate_is_steeper_on_sparse_data() {
    let mut slopes = Vec::new();
    for stage2 in [KernelSpec::matern(2.5, 1.5).on_coords(0..4), KernelSpec::matern(2.5, 2.4)] {
        let mut cfg = presets::multivariate(Scenario::MultiSparse, 200, 6, 0);
        cfg.kernels.fixed_stage2 = Some(stage2);
        cfg.selection.fixed_lambda = Some(kcate::config::RegRule::Power { c: 1.0, p: 0.5 });
        let settings = MethodSettings::from_config(&cfg);
        let base = ScenarioSpec::new(Scenario::MultiSparse, 200, 0.5, 0);
        let sweep = rate_sweep(&base, Method::OursFixed, &settings, &[200, 400, 800], 6, 0, 1000).unwrap();
        slopes.push(sweep.slope);
    }
    assert!(slopes[0] < slopes[1], "subset {} vs all {}", slopes[0], slopes[1]);
}

#[test]
fn replications_are_reproducible_and_paired() {
    let cfg = presets::univariate(80, 3, 2);
    let settings = MethodSettings::from_config(&cfg);
    let spec = ScenarioSpec::new(Scenario::Univariate, 80, 1.0, 2);
    let methods = [Method::Ours, Method::PlugIn];
    let a = run_experiment(&spec, &methods, &settings, 3, 2, 200).unwrap();
    let b = run_experiment(&spec, &methods, &settings, 3, 2, 200).unwrap();
    let (mut ca, mut cb) = (Vec::new(), Vec::new());
    write_report_csv(&mut ca, &a, false).unwrap();
    write_report_csv(&mut cb, &b, false).unwrap();
    assert_eq!(ca, cb);
    let text = String::from_utf8(ca).unwrap();
    assert_eq!(text.lines().count(), 1 + 2 * 3);
    assert!(a[0].reps.iter().zip(&a[1].reps).all(|(x, y)| x.seed == y.seed));
}

#[test]
fn ingestion_rescales_and_reports_bad_rows() {
    let mut csv = String::from("x1,x2,t,y\n2,10,0,5\n4,20,1,7\n3,15,1,9\n");
    for i in 0..9 {
        csv.push_str(&format!("3,{},{},6\n", 11 + i, i % 2));
    }
    let cols = vec!["x1".to_string(), "x2".to_string()];
    let ing = ingest_reader(csv.as_bytes(), &cols, "t", "y", None).unwrap();
    assert_eq!(ing.data.x[(2, 0)], 0.5);
    assert_eq!(ing.data.y[0], 0.0);
    assert_eq!(ing.rescaling.unscale_cate(&ing.data.y.clone())[2], 4.0);

    let bad = csv.replacen("4,20,1,7", "4,20,2,7", 1);
    let err = ingest_reader(bad.as_bytes(), &cols, "t", "y", None).unwrap_err();
    assert!(err.to_string().starts_with("csv row 3:"), "{err}");
    let constant: String = csv.lines().map(|l| if l.starts_with('x') { format!("{l}\n") } else { format!("2{}\n", &l[1..]) }).collect();
    assert!(ingest_reader(constant.as_bytes(), &cols, "t", "y", None).is_err());
}
