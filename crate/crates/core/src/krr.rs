//! Exact kernel ridge regression.
//!
//! The objective is `(1/n) sum_{i in S} (y_i - f(x_i))^2 + lambda ||f||^2`
//! where `S` is the set of masked rows and `n` is the *full* sample size.
//! By the representer theorem the minimizer is `f = sum_{i in S} alpha_i
//! k(x_i, .)` with `alpha = (G_SS + n lambda I)^{-1} y_S`.

use nalgebra::{Cholesky, DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernels::{self, CompiledKernel, KernelSpec, Projected};

/// Jitter escalations attempted after a failed factorization.
const MAX_JITTER_STEPS: usize = 6;

#[derive(Clone, Debug)]
pub struct FittedKrr {
    spec: KernelSpec,
    train_points: DMatrix<f64>,
    dual_coeffs: DVector<f64>,
    ridge: f64,
    n_total: usize,
    kernel: CompiledKernel,
    projected: Projected,
}

impl FittedKrr {
    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    pub fn train_points(&self) -> &DMatrix<f64> {
        &self.train_points
    }

    pub fn dual_coeffs(&self) -> &DVector<f64> {
        &self.dual_coeffs
    }

    /// The diagonal shift `n * lambda` used in the linear system.
    pub fn ridge(&self) -> f64 {
        self.ridge
    }

    pub fn n_total(&self) -> usize {
        self.n_total
    }

    pub fn dim(&self) -> usize {
        self.train_points.ncols()
    }

    pub(crate) fn from_parts(
        spec: KernelSpec,
        kernel: CompiledKernel,
        projected: Projected,
        train_points: DMatrix<f64>,
        dual_coeffs: DVector<f64>,
        ridge: f64,
        n_total: usize,
    ) -> Self {
        debug_assert_eq!(dual_coeffs.len(), train_points.nrows());
        FittedKrr {
            spec,
            train_points,
            dual_coeffs,
            ridge,
            n_total,
            kernel,
            projected,
        }
    }

    /// `f(x) = sum_i alpha_i k(x_i, x)` for every query row.
    pub fn predict(&self, xq: &DMatrix<f64>) -> Result<DVector<f64>> {
        if xq.ncols() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: xq.ncols(),
            });
        }
        let q = kernels::project_like(&self.spec, &self.kernel, xq)?;
        Ok(self.predict_projected(&q))
    }

    pub(crate) fn predict_projected(&self, q: &Projected) -> DVector<f64> {
        let alpha = self.dual_coeffs.as_slice();
        let out: Vec<f64> = (0..q.rows())
            .into_par_iter()
            .map(|j| {
                let xj = q.row(j);
                alpha
                    .iter()
                    .enumerate()
                    .map(|(i, a)| a * self.kernel.eval(xj, self.projected.row(i)))
                    .sum()
            })
            .collect();
        DVector::from_vec(out)
    }

    /// Same model with every dual coefficient set to zero.
    pub fn zeroed(&self) -> Self {
        let mut out = self.clone();
        out.dual_coeffs.fill(0.0);
        out
    }
}

pub(crate) fn check_lambda(name: &'static str, lambda: f64) -> Result<()> {
    if lambda > 0.0 && lambda.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(name, format!("must be positive and finite, got {lambda}")))
    }
}

/// Solves `(G + ridge I) alpha = y` by Cholesky factorization. A failed
/// factorization is retried with diagonal jitter starting at
/// `1e-10 * trace(G) / m` and growing tenfold per attempt.
pub fn solve_ridge(gram: &DMatrix<f64>, y: &DVector<f64>, ridge: f64) -> Result<DVector<f64>> {
    let m = gram.nrows();
    if gram.ncols() != m || y.len() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            got: y.len(),
        });
    }
    if !y.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("regression targets"));
    }
    let base_jitter = (1e-10 * gram.trace() / m as f64).max(f64::MIN_POSITIVE);
    let mut jitter = 0.0;
    for attempt in 0..=MAX_JITTER_STEPS {
        let mut a = gram.clone();
        for i in 0..m {
            a[(i, i)] += ridge + jitter;
        }
        if let Some(chol) = Cholesky::new(a) {
            let alpha = chol.solve(y);
            if alpha.iter().all(|v| v.is_finite()) {
                return Ok(alpha);
            }
        }
        jitter = base_jitter * 10f64.powi(attempt as i32);
    }
    Err(Error::SingularSystem {
        attempts: MAX_JITTER_STEPS,
    })
}

/// Fits KRR on the rows where `mask` is true. `lambda` multiplies the
/// full-sample objective, so the system ridge is `X.nrows() * lambda`.
///
/// A `"median"` length scale is resolved on all rows of `x`.
pub fn fit_masked(
    spec: &KernelSpec,
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    mask: &[bool],
    lambda: f64,
) -> Result<FittedKrr> {
    let n = x.nrows();
    if y.len() != n || mask.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: if y.len() != n { y.len() } else { mask.len() },
        });
    }
    check_lambda("lambda", lambda)?;
    let rows: Vec<usize> = (0..n).filter(|&i| mask[i]).collect();
    if rows.is_empty() {
        return Err(Error::EmptyMask);
    }
    let spec = spec.resolve(x)?;
    let prep = kernels::prepare(&spec, x, rows.iter().copied())?;
    let gram = kernels::gram_projected(&prep.kernel, &prep.points);
    let y_s = DVector::from_iterator(rows.len(), rows.iter().map(|&i| y[i]));
    let ridge = n as f64 * lambda;
    let alpha = solve_ridge(&gram, &y_s, ridge)?;
    let train_points = x.select_rows(rows.iter());
    Ok(FittedKrr::from_parts(
        spec,
        prep.kernel,
        prep.points,
        train_points,
        alpha,
        ridge,
        n,
    ))
}

/// Unmasked KRR, equivalent to `fit_masked` with an all-true mask.
pub fn fit(spec: &KernelSpec, x: &DMatrix<f64>, y: &DVector<f64>, lambda: f64) -> Result<FittedKrr> {
    fit_masked(spec, x, y, &vec![true; x.nrows()], lambda)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_system() {
        // k(x, x) = 1 for RBF; alpha = 2 / (1 + 1).
        let x = DMatrix::from_row_slice(1, 1, &[0.5]);
        let y = DVector::from_vec(vec![2.0]);
        let m = fit(&KernelSpec::rbf(1.0), &x, &y, 1.0).unwrap();
        assert!((m.dual_coeffs()[0] - 1.0).abs() < 1e-15);
        assert_eq!(m.ridge(), 1.0);
        assert_eq!(m.n_total(), 1);
    }

    #[test]
    fn ridge_uses_full_sample_size() {
        let x = DMatrix::from_column_slice(4, 1, &[0.0, 0.3, 0.6, 0.9]);
        let y = DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0]);
        let m = fit_masked(&KernelSpec::sobolev(1), &x, &y, &[true, false, true, false], 0.5).unwrap();
        assert_eq!(m.ridge(), 2.0);
        assert_eq!(m.train_points().nrows(), 2);
        assert_eq!(m.n_total(), 4);
    }

    #[test]
    fn empty_mask_and_bad_lambda() {
        let x = DMatrix::from_column_slice(2, 1, &[0.0, 0.3]);
        let y = DVector::from_vec(vec![1.0, 2.0]);
        let spec = KernelSpec::rbf(1.0);
        assert!(matches!(
            fit_masked(&spec, &x, &y, &[false, false], 1.0),
            Err(Error::EmptyMask)
        ));
        assert!(fit(&spec, &x, &y, 0.0).is_err());
        assert!(fit(&spec, &x, &y, f64::NAN).is_err());
    }

    #[test]
    fn zero_coefficients_predict_zero() {
        let x = DMatrix::from_column_slice(3, 1, &[0.1, 0.5, 0.9]);
        let y = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let m = fit(&KernelSpec::matern(2.5, 0.3), &x, &y, 0.1).unwrap().zeroed();
        let p = m.predict(&DMatrix::from_column_slice(2, 1, &[0.2, 0.7])).unwrap();
        assert!(p.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn interpolation_limit() {
        let x = DMatrix::from_column_slice(5, 1, &[0.0, 0.25, 0.5, 0.75, 1.0]);
        let y = DVector::from_vec(vec![0.3, -1.0, 2.0, 0.1, 0.7]);
        let m = fit(&KernelSpec::sobolev(1), &x, &y, 1e-12).unwrap();
        let p = m.predict(&x).unwrap();
        for i in 0..5 {
            assert!((p[i] - y[i]).abs() < 1e-4);
        }
    }

    #[test]
    fn predict_checks_dimension() {
        let x = DMatrix::from_row_slice(2, 2, &[0.0, 0.1, 0.5, 0.2]);
        let y = DVector::from_vec(vec![1.0, 2.0]);
        let m = fit(&KernelSpec::rbf(1.0), &x, &y, 0.1).unwrap();
        assert!(matches!(
            m.predict(&DMatrix::zeros(1, 3)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn jitter_rescues_singular_gram() {
        // Rank-one Gram with a negligible ridge still solves.
        let g = DMatrix::from_element(3, 3, 1.0);
        let y = DVector::from_vec(vec![1.0, 1.0, 1.0]);
        let alpha = solve_ridge(&g, &y, 1e-300).unwrap();
        assert!(alpha.iter().all(|v| v.is_finite()));
    }
}
