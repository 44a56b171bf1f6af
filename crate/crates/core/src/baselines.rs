//! Comparison estimators: plug-in KRR and the DR-learner, both tuned by
//! k-fold cross-validation over a lambda grid.

use nalgebra::{DMatrix, DVector};

use crate::cate::{CatePredictor, Dataset};
use crate::error::{Error, Result};
use crate::kernels::{self, KernelSpec};
use crate::krr::{self, FittedKrr};
use crate::seeds;

/// Propensity predictions are clipped into this interval before division.
pub const PROPENSITY_CLIP: (f64, f64) = (0.01, 0.99);

/// Default number of CV folds.
pub const DEFAULT_FOLDS: usize = 3;

/// `{2^(j-1) / n : j = 1..=count}`.
pub fn dyadic_grid(n: usize, count: usize) -> Vec<f64> {
    (0..count).map(|j| 2f64.powi(j as i32) / n as f64).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct CvOutcome {
    pub lambda: f64,
    /// Mean out-of-fold squared error per grid value, in grid order.
    pub errors: Vec<f64>,
}

fn validate_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::invalid("lambda grid", "empty"));
    }
    for &l in grid {
        krr::check_lambda("lambda grid", l)?;
    }
    Ok(())
}

/// Contiguous chunks of a seeded permutation of `0..m`, sizes differing by
/// at most one.
pub fn kfold_assignments(m: usize, k: usize, seed: u64) -> Vec<Vec<usize>> {
    let perm = seeds::permutation(m, seed);
    let (base, extra) = (m / k, m % k);
    let mut out = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let len = base + usize::from(f < extra);
        out.push(perm[start..start + len].to_vec());
        start += len;
    }
    out
}

/// k-fold CV over the masked rows. Each held-out fold is removed from the
/// mask, so the system ridge stays `X.nrows() * lambda` exactly as in the
/// final refit.
pub fn kfold_cv(
    spec: &KernelSpec,
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    mask: &[bool],
    grid: &[f64],
    k: usize,
    seed: u64,
) -> Result<CvOutcome> {
    validate_grid(grid)?;
    if k < 2 {
        return Err(Error::invalid("k", format!("need at least 2 folds, got {k}")));
    }
    let n = x.nrows();
    if y.len() != n || mask.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: y.len().min(mask.len()) });
    }
    let rows: Vec<usize> = (0..n).filter(|&i| mask[i]).collect();
    if rows.len() < k {
        return Err(Error::DegenerateSample(format!(
            "{} masked rows cannot fill {k} folds",
            rows.len()
        )));
    }
    let spec = spec.resolve(x)?;
    let prep = kernels::prepare(&spec, x, rows.iter().copied())?;
    let gram = kernels::gram_projected(&prep.kernel, &prep.points);
    let ys = DVector::from_iterator(rows.len(), rows.iter().map(|&i| y[i]));
    let folds = kfold_assignments(rows.len(), k, seed);

    let mut sse = vec![0.0; grid.len()];
    for (f, held) in folds.iter().enumerate() {
        let train: Vec<usize> = folds
            .iter()
            .enumerate()
            .filter(|&(g, _)| g != f)
            .flat_map(|(_, idx)| idx.iter().copied())
            .collect();
        let g_tt = gram.select_rows(train.iter()).select_columns(train.iter());
        let g_vt = gram.select_rows(held.iter()).select_columns(train.iter());
        let y_t = DVector::from_iterator(train.len(), train.iter().map(|&i| ys[i]));
        let y_v = DVector::from_iterator(held.len(), held.iter().map(|&i| ys[i]));
        for (e, &lambda) in sse.iter_mut().zip(grid) {
            let alpha = krr::solve_ridge(&g_tt, &y_t, n as f64 * lambda)?;
            *e += (&g_vt * alpha - &y_v).norm_squared();
        }
    }
    let errors: Vec<f64> = sse.iter().map(|s| s / rows.len() as f64).collect();

    // Ties go to the largest lambda.
    let mut best = 0;
    for j in 1..grid.len() {
        let better = errors[j] < errors[best] || (errors[j] == errors[best] && grid[j] > grid[best]);
        if better {
            best = j;
        }
    }
    Ok(CvOutcome {
        lambda: grid[best],
        errors,
    })
}

pub fn kfold_cv_lambda(
    spec: &KernelSpec,
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    mask: &[bool],
    grid: &[f64],
    k: usize,
    seed: u64,
) -> Result<f64> {
    if grid.len() == 1 {
        validate_grid(grid)?;
        return Ok(grid[0]);
    }
    Ok(kfold_cv(spec, x, y, mask, grid, k, seed)?.lambda)
}

/// CV-tuned masked fit followed by a refit on every masked row.
fn tuned_fit(
    spec: &KernelSpec,
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    mask: &[bool],
    grid: &[f64],
    k: usize,
    seed: u64,
) -> Result<(FittedKrr, f64)> {
    let lambda = kfold_cv_lambda(spec, x, y, mask, grid, k, seed)?;
    Ok((krr::fit_masked(spec, x, y, mask, lambda)?, lambda))
}

/// `h(x) = f_1(x) - f_0(x)` from two independently tuned regressions.
#[derive(Clone, Debug)]
pub struct PlugIn {
    pub f0: FittedKrr,
    pub f1: FittedKrr,
    pub lambda0: f64,
    pub lambda1: f64,
}

impl CatePredictor for PlugIn {
    fn predict_cate(&self, xq: &DMatrix<f64>) -> Result<DVector<f64>> {
        Ok(self.f1.predict(xq)? - self.f0.predict(xq)?)
    }
}

pub fn plugin_cate(data: &Dataset, spec_f: &KernelSpec, grid: &[f64], k: usize, seed: u64) -> Result<PlugIn> {
    data.require_both_arms()?;
    let spec = spec_f.resolve(&data.x)?;
    // Both arms draw folds from one stream, so identical arms tune identically.
    let cv_seed = seeds::derive_seed(seed, seeds::TAG_CV);
    let (f0, lambda0) = tuned_fit(&spec, &data.x, &data.y, &data.arm_mask(0), grid, k, cv_seed)?;
    let (f1, lambda1) = tuned_fit(&spec, &data.x, &data.y, &data.arm_mask(1), grid, k, cv_seed)?;
    Ok(PlugIn { f0, f1, lambda0, lambda1 })
}

/// AIPW pseudo-outcome
/// `mu1 - mu0 + a (y - mu1) / pi - (1 - a)(y - mu0) / (1 - pi)` with `pi`
/// clipped to [`PROPENSITY_CLIP`].
pub fn dr_pseudo_outcome(
    a: &[u8],
    y: &DVector<f64>,
    mu0: &DVector<f64>,
    mu1: &DVector<f64>,
    pi: &DVector<f64>,
) -> DVector<f64> {
    DVector::from_iterator(
        a.len(),
        (0..a.len()).map(|i| {
            let p = clip_propensity(pi[i]);
            let ai = f64::from(a[i]);
            mu1[i] - mu0[i] + ai * (y[i] - mu1[i]) / p - (1.0 - ai) * (y[i] - mu0[i]) / (1.0 - p)
        }),
    )
}

pub fn clip_propensity(p: f64) -> f64 {
    p.clamp(PROPENSITY_CLIP.0, PROPENSITY_CLIP.1)
}

/// Stage-2 regression of DR pseudo-outcomes, plus the first-half nuisances.
#[derive(Clone, Debug)]
pub struct DrLearner {
    pub stage2: FittedKrr,
    pub f0: FittedKrr,
    pub f1: FittedKrr,
    pub propensity: FittedKrr,
    pub stage2_lambda: f64,
}

impl CatePredictor for DrLearner {
    fn predict_cate(&self, xq: &DMatrix<f64>) -> Result<DVector<f64>> {
        self.stage2.predict(xq)
    }
}

/// Seeded halves `(ceil(n/2), floor(n/2))`.
pub fn split_halves(n: usize, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let perm = seeds::permutation(n, seeds::derive_seed(seed, seeds::TAG_DR));
    let h = n.div_ceil(2);
    (perm[..h].to_vec(), perm[h..].to_vec())
}

pub fn dr_learner(
    data: &Dataset,
    spec_f: &KernelSpec,
    stage2_spec: &KernelSpec,
    grid: &[f64],
    k: usize,
    seed: u64,
) -> Result<DrLearner> {
    let (i1, i2) = split_halves(data.len(), seed);
    let h1 = data.subset(&i1);
    let h2 = data.subset(&i2);
    h1.require_both_arms()?;
    h2.require_both_arms()?;

    let cv_seed = seeds::derive_seed(seed, seeds::TAG_CV);
    let spec = spec_f.resolve(&h1.x)?;
    let (f0, _) = tuned_fit(&spec, &h1.x, &h1.y, &h1.arm_mask(0), grid, k, cv_seed)?;
    let (f1, _) = tuned_fit(&spec, &h1.x, &h1.y, &h1.arm_mask(1), grid, k, cv_seed)?;
    let labels = DVector::from_iterator(h1.len(), h1.a.iter().map(|&v| f64::from(v)));
    let all1 = vec![true; h1.len()];
    let (propensity, _) = tuned_fit(&spec, &h1.x, &labels, &all1, grid, k, seeds::derive_seed(cv_seed, 2))?;

    let psi = dr_pseudo_outcome(
        &h2.a,
        &h2.y,
        &f0.predict(&h2.x)?,
        &f1.predict(&h2.x)?,
        &propensity.predict(&h2.x)?,
    );
    let stage2 = stage2_spec.resolve(&h2.x)?;
    let all2 = vec![true; h2.len()];
    let (stage2, stage2_lambda) = tuned_fit(&stage2, &h2.x, &psi, &all2, grid, k, seeds::derive_seed(cv_seed, 3))?;
    Ok(DrLearner {
        stage2,
        f0,
        f1,
        propensity,
        stage2_lambda,
    })
}
