use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// `Tr(S_lambda) = sum_j mu_j / (mu_j + lambda)` over the eigenvalues `mu_j`
/// of `G / n`, with negative roundoff eigenvalues clamped to zero.
pub fn effective_dimension(gram: &DMatrix<f64>, lambda: f64) -> Result<f64> {
    crate::krr::check_lambda("lambda", lambda)?;
    let n = gram.nrows();
    if n == 0 || gram.ncols() != n {
        return Err(Error::invalid("gram", "must be a non-empty square matrix"));
    }
    if !gram.iter().all(|v| v.is_finite()) {
        return Err(Error::Eigen);
    }
    let eig = SymmetricEigen::new(gram / n as f64);
    Ok(eig
        .eigenvalues
        .iter()
        .map(|&mu| {
            let mu = mu.max(0.0);
            mu / (mu + lambda)
        })
        .sum())
}

/// Leverage scores `diag(G (G + n lambda I)^{-1})`; they sum to the
/// effective dimension.
pub fn leverage_scores(gram: &DMatrix<f64>, lambda: f64) -> Result<Vec<f64>> {
    crate::krr::check_lambda("lambda", lambda)?;
    let n = gram.nrows();
    let eig = SymmetricEigen::new(gram.clone());
    let ridge = n as f64 * lambda;
    let w: Vec<f64> = eig.eigenvalues.iter().map(|&e| {
        let e = e.max(0.0);
        e / (e + ridge)
    }).collect();
    let v = &eig.eigenvectors;
    Ok((0..n)
        .map(|i| (0..n).map(|j| v[(i, j)] * v[(i, j)] * w[j]).sum())
        .collect())
}
