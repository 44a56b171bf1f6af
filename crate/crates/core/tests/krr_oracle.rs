use kcate::krr::{fit, solve_ridge};
use kcate::{fit_masked, gram_matrix, kernel_eval, DMatrix, DVector, KernelSpec};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_problem(seed: u64, n: usize, d: usize) -> (DMatrix<f64>, DVector<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = DMatrix::from_fn(n, d, |_, _| rng.random::<f64>());
    let y = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
    (x, y)
}

fn dense_alpha(spec: &KernelSpec, x: &DMatrix<f64>, y: &DVector<f64>, ridge: f64) -> DVector<f64> {
    let n = x.nrows();
    let mut g = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let a: Vec<f64> = x.row(i).iter().copied().collect();
            let b: Vec<f64> = x.row(j).iter().copied().collect();
            g[(i, j)] = kernel_eval(spec, &a, &b).unwrap();
        }
    }
    (g + DMatrix::identity(n, n) * ridge).try_inverse().unwrap() * y
}

fn rel(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).norm() / b.norm()
}

fn specs() -> Vec<KernelSpec> {
    vec![
        KernelSpec::sobolev(1),
        KernelSpec::sobolev(2),
        KernelSpec::matern(1.5, 0.7),
        KernelSpec::matern(2.5, 0.4),
        KernelSpec::rbf(0.5),
    ]
}

#[test]
fn five_point_problem_matches_dense_inverse() {
    let (x, y) = random_problem(1, 5, 2);
    let xq = random_problem(2, 4, 2).0;
    for spec in specs() {
        let lambda = 0.03;
        let m = fit(&spec, &x, &y, lambda).unwrap();
        let alpha = dense_alpha(&spec, &x, &y, 5.0 * lambda);
        assert!(rel(m.dual_coeffs(), &alpha) < 1e-8, "{spec:?}");
        let kq = kcate::kernels::cross_gram(&spec, &xq, &x).unwrap();
        assert!(rel(&m.predict(&xq).unwrap(), &(kq * &alpha)) < 1e-8);
    }
}

#[test]
fn masked_fit_uses_full_sample_ridge() {
    let (x, y) = random_problem(3, 12, 1);
    let mask: Vec<bool> = (0..12).map(|i| i % 3 != 0).collect();
    let rows: Vec<usize> = (0..12).filter(|&i| mask[i]).collect();
    let xs = x.select_rows(&rows);
    let ys = y.select_rows(&rows);
    let spec = KernelSpec::sobolev(1);
    let lambda = 0.02;
    let m = fit_masked(&spec, &x, &y, &mask, lambda).unwrap();
    assert_eq!(m.n_total(), 12);
    assert_eq!(m.train_points().nrows(), rows.len());
    let alpha = dense_alpha(&spec, &xs, &ys, 12.0 * lambda);
    assert!(rel(m.dual_coeffs(), &alpha) < 1e-10);
}

#[test]
fn full_mask_equals_unmasked_fit() {
    let (x, y) = random_problem(4, 20, 3);
    let spec = KernelSpec::matern(2.5, 0.8);
    let a = fit_masked(&spec, &x, &y, &[true; 20], 0.01).unwrap();
    let b = fit(&spec, &x, &y, 0.01).unwrap();
    assert_eq!(a.dual_coeffs(), b.dual_coeffs());
}

#[test]
fn training_residual_is_monotone_in_lambda() {
    let (x, y) = random_problem(5, 40, 1);
    let spec = KernelSpec::sobolev(2);
    let mut prev = 0.0;
    for j in 0..12 {
        let lambda = 1e-6 * 4f64.powi(j);
        let m = fit(&spec, &x, &y, lambda).unwrap();
        let r = (m.predict(&x).unwrap() - &y).norm_squared() / 40.0;
        assert!(r >= prev - 1e-12, "lambda {lambda}: {r} < {prev}");
        prev = r;
    }
}

#[test]
fn heavy_ridge_shrinks_to_zero() {
    let (x, y) = random_problem(6, 15, 2);
    let lambda = 1e6;
    let m = fit(&KernelSpec::rbf(0.5), &x, &y, lambda).unwrap();
    assert!(m.dual_coeffs().norm() <= y.norm() / (15.0 * lambda));
    assert!(m.predict(&x).unwrap().amax() < 1e-5);
}

#[test]
fn jitter_rescues_an_exactly_singular_system() {
    let g = DMatrix::from_element(3, 3, 1.0);
    let y = DVector::from_vec(vec![1.0, 1.0, 1.0]);
    let alpha = solve_ridge(&g, &y, 0.0).unwrap();
    assert!(alpha.iter().all(|v| v.is_finite()));
}

#[test]
fn gram_matches_pairwise_evaluation() {
    let (x, _) = random_problem(7, 9, 2);
    let spec = KernelSpec::matern(1.5, 0.3);
    let g = gram_matrix(&spec, &x).unwrap();
    let a: Vec<f64> = x.row(2).iter().copied().collect();
    let b: Vec<f64> = x.row(7).iter().copied().collect();
    assert_eq!(g[(2, 7)], kernel_eval(&spec, &a, &b).unwrap());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn dense_oracle_up_to_fifty_points(seed in 0u64..10_000, n in 2usize..=50, d in 1usize..=3, which in 0usize..5, log_l in -3.0f64..0.0) {
        let (x, y) = random_problem(seed, n, d);
        let spec = specs()[which].clone();
        let lambda = 10f64.powf(log_l);
        let m = fit(&spec, &x, &y, lambda).unwrap();
        let alpha = dense_alpha(&spec, &x, &y, n as f64 * lambda);
        prop_assert!(rel(m.dual_coeffs(), &alpha) < 1e-8);
    }

    #[test]
    fn fit_is_linear_in_the_response(seed in 0u64..10_000, c in -3.0f64..3.0) {
        let (x, y1) = random_problem(seed, 15, 2);
        let (_, y2) = random_problem(seed + 1, 15, 2);
        let spec = KernelSpec::rbf(0.6);
        let combo = &y1 * c + &y2;
        let lhs = fit(&spec, &x, &combo, 0.05).unwrap();
        let a1 = fit(&spec, &x, &y1, 0.05).unwrap();
        let a2 = fit(&spec, &x, &y2, 0.05).unwrap();
        let rhs = a1.dual_coeffs() * c + a2.dual_coeffs();
        prop_assert!((lhs.dual_coeffs() - &rhs).amax() <= 1e-9 * (1.0 + rhs.amax()));
    }
}
