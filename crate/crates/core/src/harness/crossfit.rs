//! Cross-fitted model selection: the three roles (candidate training, proxy
//! construction, selection) rotate over a seeded three-fold partition and the
//! three selected predictors are averaged pointwise.

use nalgebra::{DMatrix, DVector};

use crate::baselines::kfold_assignments;
use crate::cate::{CatePredictor, Dataset};
use crate::config::RegRule;
use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::seeds;
use crate::selection::{self, CandidateConfig, SelectInputs, SelectionResult, TruncatedCate};

pub const ROTATIONS: usize = 3;

#[derive(Clone, Debug)]
pub struct CrossFitPipeline {
    pub candidates: Vec<CandidateConfig>,
    pub spec_f: KernelSpec,
    pub nuisance_lambda: RegRule,
    pub proxy_lambda: RegRule,
    pub truncation: f64,
}

impl CrossFitPipeline {
    pub fn new(candidates: Vec<CandidateConfig>, spec_f: KernelSpec, truncation: f64) -> Self {
        CrossFitPipeline {
            candidates,
            spec_f,
            nuisance_lambda: RegRule::InverseN { c: 0.01 },
            proxy_lambda: RegRule::InverseN { c: 0.01 },
            truncation,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Rotation {
    pub index: usize,
    pub outcome: std::result::Result<(SelectionResult, TruncatedCate), String>,
}

#[derive(Clone, Debug)]
pub struct CrossFitPredictor {
    pub rotations: Vec<Rotation>,
}

impl CrossFitPredictor {
    pub fn successful(&self) -> impl Iterator<Item = (&SelectionResult, &TruncatedCate)> {
        self.rotations.iter().filter_map(|r| r.outcome.as_ref().ok().map(|(s, p)| (s, p)))
    }
}

impl CatePredictor for CrossFitPredictor {
    fn predict_cate(&self, xq: &DMatrix<f64>) -> Result<DVector<f64>> {
        let preds: Vec<DVector<f64>> = self
            .successful()
            .map(|(_, p)| p.predict_cate(xq))
            .collect::<Result<_>>()?;
        average(&preds)
    }
}

/// Pointwise arithmetic mean.
pub fn average(preds: &[DVector<f64>]) -> Result<DVector<f64>> {
    let first = preds.first().ok_or(Error::NoCandidateSurvived(0))?;
    let mut acc = DVector::zeros(first.len());
    for p in preds {
        acc += p;
    }
    Ok(acc / preds.len() as f64)
}

/// Fold assignment shared by every rotation.
pub fn rotation_folds(n: usize, seed: u64) -> Vec<Vec<usize>> {
    kfold_assignments(n, ROTATIONS, seeds::derive_seed(seed, seeds::TAG_SPLIT))
}

/// Runs selection for rotation `r`: fold `r` trains candidates, fold
/// `r + 1` builds proxies, fold `r + 2` scores.
pub fn run_rotation(data: &Dataset, pipeline: &CrossFitPipeline, folds: &[Vec<usize>], r: usize) -> Result<(SelectionResult, TruncatedCate)> {
    let d1 = data.subset(&folds[r % ROTATIONS]);
    let d2 = data.subset(&folds[(r + 1) % ROTATIONS]);
    let d3 = data.subset(&folds[(r + 2) % ROTATIONS]);
    for d in [&d1, &d2, &d3] {
        d.require_both_arms()?;
    }
    let inputs = SelectInputs {
        bar_lambda: pipeline.nuisance_lambda.at(d1.len()),
        tilde_lambda: pipeline.proxy_lambda.at(d2.len()),
        d1: &d1,
        d2: &d2,
        d3: &d3,
        spec_f: &pipeline.spec_f,
        truncation: pipeline.truncation,
    };
    let out = selection::select(&pipeline.candidates, &inputs)?;
    let pred = out.selected();
    Ok((out.result, pred))
}

pub fn cross_fit_average(data: &Dataset, pipeline: &CrossFitPipeline, seed: u64) -> Result<CrossFitPredictor> {
    if data.len() < 9 {
        return Err(Error::invalid("n", format!("cross-fitting needs at least 9 rows, got {}", data.len())));
    }
    let folds = rotation_folds(data.len(), seed);
    let rotations: Vec<Rotation> = (0..ROTATIONS)
        .map(|r| Rotation {
            index: r,
            outcome: run_rotation(data, pipeline, &folds, r).map_err(|e| e.to_string()),
        })
        .collect();
    let out = CrossFitPredictor { rotations };
    if out.successful().next().is_none() {
        let reasons: Vec<String> = out
            .rotations
            .iter()
            .filter_map(|r| r.outcome.as_ref().err().cloned())
            .collect();
        return Err(Error::DegenerateSample(format!("every rotation failed: {}", reasons.join("; "))));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn averaging() {
        let c = DVector::from_element(3, 1.5);
        assert_eq!(average(&[c.clone(), c.clone(), c.clone()]).unwrap(), c);
        let p = |v| DVector::from_vec(vec![v]);
        assert_eq!(average(&[p(0.0), p(3.0), p(6.0)]).unwrap()[0], 3.0);
        assert!(average(&[]).is_err());
    }

    #[test]
    fn folds_cover_rows() {
        let f = rotation_folds(31, 2);
        let mut all = f.concat();
        all.sort_unstable();
        assert_eq!(all, (0..31).collect::<Vec<_>>());
    }
}
