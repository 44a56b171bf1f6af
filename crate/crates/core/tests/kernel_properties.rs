use kcate::config::presets;
use kcate::dgp::{Scenario, ScenarioSpec};
use kcate::kernels::median_pairwise_distance;
use kcate::{gram_matrix, kernel_eval, ActiveCoords, DMatrix, KernelSpec, LengthScale};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn uniform(seed: u64, n: usize, d: usize) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DMatrix::from_fn(n, d, |_, _| rng.random::<f64>())
}

fn family(which: usize) -> KernelSpec {
    match which {
        0 => KernelSpec::sobolev(1),
        1 => KernelSpec::sobolev(3),
        2 => KernelSpec::matern(1.5, 0.5),
        3 => KernelSpec::matern(2.5, 0.5),
        _ => KernelSpec::rbf(0.5),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn grams_are_symmetric_and_psd(seed in 0u64..10_000, n in 2usize..=80, d in 1usize..=4, which in 0usize..5) {
        let g = gram_matrix(&family(which), &uniform(seed, n, d)).unwrap();
        prop_assert!(g == g.transpose());
        let min = g.clone().symmetric_eigenvalues().min();
        prop_assert!(min >= -1e-8 * g.trace() / n as f64);
    }

    #[test]
    fn subset_kernel_equals_kernel_on_projected_data(seed in 0u64..10_000, which in 0usize..5) {
        let x = uniform(seed, 12, 5);
        let coords = [4usize, 1];
        let sub = family(which).on_coords(coords);
        let projected = DMatrix::from_fn(12, 2, |i, j| x[(i, coords[j])]);
        let full = family(which);
        prop_assert_eq!(gram_matrix(&sub, &x).unwrap(), gram_matrix(&full, &projected).unwrap());
    }
}

fn median_oracle(x: &DMatrix<f64>, coords: &[usize]) -> f64 {
    let mut d = Vec::new();
    for i in 0..x.nrows() {
        for j in (i + 1)..x.nrows() {
            d.push(coords.iter().map(|&c| (x[(i, c)] - x[(j, c)]).powi(2)).sum::<f64>().sqrt());
        }
    }
    d.sort_by(f64::total_cmp);
    let m = d.len();
    if m % 2 == 1 {
        d[m / 2]
    } else {
        0.5 * (d[m / 2 - 1] + d[m / 2])
    }
}

#[test]
fn median_distance_matches_brute_force() {
    let x = uniform(11, 41, 6);
    let sub = ActiveCoords::subset([0, 2, 5]);
    assert!((median_pairwise_distance(&x, &sub).unwrap() - median_oracle(&x, &[0, 2, 5])).abs() < 1e-15);
    assert!((median_pairwise_distance(&x, &ActiveCoords::ALL).unwrap() - median_oracle(&x, &[0, 1, 2, 3, 4, 5])).abs() < 1e-15);
}

#[test]
fn median_contract_holds_for_every_length_scaled_family() {
    let x = uniform(12, 50, 3);
    let r = median_oracle(&x, &[0, 1, 2]);
    for spec in [KernelSpec::rbf(1.0), KernelSpec::matern(1.5, 1.0), KernelSpec::matern(2.5, 1.0)] {
        let resolved = spec.with_median_length_scale().resolve(&x).unwrap();
        assert!(matches!(resolved.length_scale, Some(LengthScale::Fixed(_))));
        let k = kernel_eval(&resolved, &[0.0, 0.0, 0.0], &[0.0, r, 0.0]).unwrap();
        assert!((k - 0.5).abs() < 1e-8, "{resolved:?}: {k}");
    }
}

/// The preset dictionary length scales (1.5, 2.6), (2.5, 2.4), (1.5, 1.6),
/// (2.5, 1.5), RBF 2.1 and 1.3 on ten-dimensional U[-1, 1] covariates.
#[test]
fn median_heuristic_reproduces_preset_length_scales() {
    let spec = ScenarioSpec::new(Scenario::MultiDense, 1000, 1.0, 5);
    let (data, _) = kcate::dgp::generate(&spec).unwrap();
    let x = data.x.rows(0, 400).into_owned();
    for template in presets::multivariate_dictionary() {
        let preset = match template.kernel.length_scale {
            Some(LengthScale::Fixed(l)) => l,
            _ => unreachable!(),
        };
        let mut spec = template.kernel.clone().with_median_length_scale();
        spec = spec.resolve(&x).unwrap();
        let Some(LengthScale::Fixed(ours)) = spec.length_scale else { unreachable!() };
        let rel = (ours - preset).abs() / preset;
        assert!(rel < 0.15, "{}: median heuristic {ours:.3} vs preset {preset}", template.label);
    }
}

/// <k(., t), g> = g(t) under the H^m inner product
/// sum_{k<m} (int f^(k))(int g^(k)) + int f^(m) g^(m).
fn reproduces(m: u32, t: f64) -> f64 {
    let spec = KernelSpec::sobolev(m);
    let k = |s: f64| kernel_eval(&spec, &[s], &[t]).unwrap();
    let g = |s: f64| (2.0 * s).cos() + s.powi(3);
    let dg = |s: f64| -2.0 * (2.0 * s).sin() + 3.0 * s * s;
    let d2g = |s: f64| -4.0 * (2.0 * s).cos() + 6.0 * s;
    let cells = 20_000;
    let w = 1.0 / cells as f64;
    let h = 1e-5;
    let (mut int_k, mut int_g, mut top) = (0.0, 0.0, 0.0);
    for c in 0..cells {
        let s = (c as f64 + 0.5) * w;
        int_k += k(s) * w;
        int_g += g(s) * w;
        top += w * match m {
            1 => (k(s + h) - k(s - h)) / (2.0 * h) * dg(s),
            _ => (k(s + h) - 2.0 * k(s) + k(s - h)) / (h * h) * d2g(s),
        };
    }
    let mut inner = int_k * int_g + top;
    if m == 2 {
        // int f' = f(1) - f(0)
        let int_dk = k(1.0) - k(0.0);
        let int_dg = g(1.0) - g(0.0);
        inner += int_dk * int_dg;
    }
    (inner - g(t)).abs()
}

#[test]
fn sobolev_kernels_reproduce_under_their_inner_product() {
    for t in [0.1, 0.37, 0.8] {
        assert!(reproduces(1, t) < 1e-3, "H1 at {t}: {}", reproduces(1, t));
        assert!(reproduces(2, t) < 1e-3, "H2 at {t}: {}", reproduces(2, t));
    }
}

#[test]
fn sobolev_rejects_points_outside_unit_cube() {
    assert!(kernel_eval(&KernelSpec::sobolev(1), &[1.2], &[0.5]).is_err());
}
