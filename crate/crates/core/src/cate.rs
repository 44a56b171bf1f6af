//! Two-stage CATE learner: undersmoothed per-arm nuisance fits, switch
//! imputation of pseudo-outcomes, and a second-stage KRR on the
//! pseudo-outcomes.
//!
//! The second-stage kernel decides which structural model the estimator
//! targets: a smoother kernel than the nuisance kernel (subspace model), the
//! nuisance kernel itself with its own regularizer (source condition), or a
//! kernel restricted to a known subset of coordinates (low-dimensional
//! structure).

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::krr::{self, FittedKrr};

/// Observational sample `{(x_i, a_i, y_i)}`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub x: DMatrix<f64>,
    pub a: Vec<u8>,
    pub y: DVector<f64>,
}

impl Dataset {
    pub fn new(x: DMatrix<f64>, a: Vec<u8>, y: DVector<f64>) -> Result<Self> {
        let n = x.nrows();
        if a.len() != n || y.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: if a.len() != n { a.len() } else { y.len() },
            });
        }
        if let Some(bad) = a.iter().position(|&v| v > 1) {
            return Err(Error::invalid("treatment", format!("row {bad} has value {}", a[bad])));
        }
        if !x.iter().chain(y.iter()).all(|v| v.is_finite()) {
            return Err(Error::NonFinite("dataset"));
        }
        Ok(Dataset { x, a, y })
    }

    pub fn len(&self) -> usize {
        self.x.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    pub fn arm_mask(&self, arm: u8) -> Vec<bool> {
        self.a.iter().map(|&v| v == arm).collect()
    }

    pub fn arm_count(&self, arm: u8) -> usize {
        self.a.iter().filter(|&&v| v == arm).count()
    }

    pub fn require_both_arms(&self) -> Result<()> {
        for arm in [0, 1] {
            if self.arm_count(arm) == 0 {
                return Err(Error::EmptyArm { arm });
            }
        }
        Ok(())
    }

    /// Rows at `idx`, in that order.
    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            x: self.x.select_rows(idx.iter()),
            a: idx.iter().map(|&i| self.a[i]).collect(),
            y: DVector::from_iterator(idx.len(), idx.iter().map(|&i| self.y[i])),
        }
    }
}

/// Anything that maps covariates to CATE predictions.
pub trait CatePredictor: Send + Sync {
    fn predict_cate(&self, xq: &DMatrix<f64>) -> Result<DVector<f64>>;
}

/// The experimental default `0.01 / n` for the nuisance regularizer.
pub fn default_nuisance_lambda(n: usize) -> f64 {
    0.01 / n as f64
}

/// Per-arm KRR fits `f_0`, `f_1` with regularizer `bar_lambda` against the
/// full-sample objective. The nuisance kernel is resolved once on all rows.
pub fn fit_nuisances(data: &Dataset, spec_f: &KernelSpec, bar_lambda: f64) -> Result<(FittedKrr, FittedKrr)> {
    data.require_both_arms()?;
    krr::check_lambda("bar_lambda", bar_lambda)?;
    let spec = spec_f.resolve(&data.x)?;
    let f0 = krr::fit_masked(&spec, &data.x, &data.y, &data.arm_mask(0), bar_lambda)?;
    let f1 = krr::fit_masked(&spec, &data.x, &data.y, &data.arm_mask(1), bar_lambda)?;
    Ok((f0, f1))
}

/// Pseudo-outcomes `m_i = y_i - f_0(x_i)` for treated rows and
/// `m_i = f_1(x_i) - y_i` for controls.
pub fn switch_impute(data: &Dataset, f0: &FittedKrr, f1: &FittedKrr) -> Result<DVector<f64>> {
    let p0 = f0.predict(&data.x)?;
    let p1 = f1.predict(&data.x)?;
    Ok(switch_combine(&data.a, &data.y, &p0, &p1))
}

/// The switch-imputation rule applied to precomputed arm predictions.
pub fn switch_combine(a: &[u8], y: &DVector<f64>, pred0: &DVector<f64>, pred1: &DVector<f64>) -> DVector<f64> {
    DVector::from_iterator(
        a.len(),
        a.iter().enumerate().map(|(i, &ai)| {
            if ai == 1 {
                y[i] - pred0[i]
            } else {
                pred1[i] - y[i]
            }
        }),
    )
}

#[derive(Clone, Debug)]
pub struct CateEstimator {
    pub nuisance0: FittedKrr,
    pub nuisance1: FittedKrr,
    pub second_stage: FittedKrr,
    pub nuisance_spec: KernelSpec,
    pub stage2_spec: KernelSpec,
    pub bar_lambda: f64,
    pub lambda: f64,
}

impl CateEstimator {
    pub fn predict(&self, xq: &DMatrix<f64>) -> Result<DVector<f64>> {
        self.second_stage.predict(xq)
    }
}

impl CatePredictor for CateEstimator {
    fn predict_cate(&self, xq: &DMatrix<f64>) -> Result<DVector<f64>> {
        self.predict(xq)
    }
}

/// Runs the full two-stage learner on `data`. The second stage is unmasked
/// KRR of the pseudo-outcomes on all `n` rows with main regularizer
/// `lambda`.
pub fn fit_cate(
    data: &Dataset,
    spec_f: &KernelSpec,
    stage2_spec: &KernelSpec,
    bar_lambda: f64,
    lambda: f64,
) -> Result<CateEstimator> {
    krr::check_lambda("lambda", lambda)?;
    let (nuisance0, nuisance1) = fit_nuisances(data, spec_f, bar_lambda)?;
    let m = switch_impute(data, &nuisance0, &nuisance1)?;
    let second_stage = krr::fit(stage2_spec, &data.x, &m, lambda)?;
    Ok(CateEstimator {
        nuisance_spec: nuisance0.spec().clone(),
        stage2_spec: second_stage.spec().clone(),
        nuisance0,
        nuisance1,
        second_stage,
        bar_lambda,
        lambda,
    })
}

pub fn predict_cate(est: &CateEstimator, xq: &DMatrix<f64>) -> Result<DVector<f64>> {
    est.predict(xq)
}
