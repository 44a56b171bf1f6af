//! Model selection over a library of `(stage-2 kernel, lambda)` candidates.
//!
//! The sample is split three ways. Candidates are trained on `D1` with the
//! two-stage learner, then truncated to `[-B, B]`. Nuisances refit on `D2`
//! turn `D3` into switch-imputed proxy labels, and the candidate with the
//! smallest empirical squared error against those proxies on `D3` wins.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cate::{self, CateEstimator, CatePredictor, Dataset};
use crate::error::{Error, Result};
use crate::kernels::{self, KernelSpec};
use crate::krr::{self, FittedKrr};
use crate::seeds;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CandidateConfig {
    pub label: String,
    pub stage2_spec: KernelSpec,
    pub lambda: f64,
}

impl CandidateConfig {
    pub fn new(label: impl Into<String>, stage2_spec: KernelSpec, lambda: f64) -> Self {
        CandidateConfig {
            label: label.into(),
            stage2_spec,
            lambda,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SelectionResult {
    pub chosen: usize,
    pub truncation_level: f64,
    /// Empirical risk on `D3` per candidate; `+inf` for candidates that
    /// failed to train.
    pub proxy_risks: Vec<f64>,
    pub candidates: Vec<CandidateConfig>,
    pub failures: Vec<(usize, String)>,
}

impl SelectionResult {
    pub fn chosen_candidate(&self) -> &CandidateConfig {
        &self.candidates[self.chosen]
    }
}

/// A CATE estimator whose predictions are clamped to `[-bound, bound]`.
#[derive(Clone, Debug)]
pub struct TruncatedCate {
    pub estimator: CateEstimator,
    pub bound: f64,
}

impl CatePredictor for TruncatedCate {
    fn predict_cate(&self, xq: &DMatrix<f64>) -> Result<DVector<f64>> {
        Ok(truncate(&self.estimator.predict(xq)?, self.bound))
    }
}

#[derive(Clone, Debug)]
pub struct SelectionOutcome {
    pub result: SelectionResult,
    /// Every trained candidate, `None` where training failed.
    pub estimators: Vec<Option<CateEstimator>>,
}

impl SelectionOutcome {
    pub fn selected(&self) -> TruncatedCate {
        TruncatedCate {
            estimator: self.estimators[self.result.chosen]
                .clone()
                .expect("chosen candidate always trained"),
            bound: self.result.truncation_level,
        }
    }

    pub fn candidate(&self, j: usize) -> Option<TruncatedCate> {
        self.estimators[j].clone().map(|estimator| TruncatedCate {
            estimator,
            bound: self.result.truncation_level,
        })
    }
}

/// Sizes `(ceil(n/3), floor(n/3), rest)` of the three splits.
pub fn split_sizes(n: usize) -> [usize; 3] {
    let n1 = n.div_ceil(3);
    let n2 = n / 3;
    [n1, n2, n - n1 - n2]
}

/// Index sets of a seeded three-way partition.
pub fn split_three_indices(n: usize, seed: u64) -> [Vec<usize>; 3] {
    let perm = seeds::permutation(n, seeds::derive_seed(seed, seeds::TAG_SPLIT));
    let [n1, n2, _] = split_sizes(n);
    [
        perm[..n1].to_vec(),
        perm[n1..n1 + n2].to_vec(),
        perm[n1 + n2..].to_vec(),
    ]
}

pub fn split_three(data: &Dataset, seed: u64) -> Result<(Dataset, Dataset, Dataset)> {
    if data.len() < 3 {
        return Err(Error::invalid("n", format!("three-way split needs n >= 3, got {}", data.len())));
    }
    let [i1, i2, i3] = split_three_indices(data.len(), seed);
    let parts = (data.subset(&i1), data.subset(&i2), data.subset(&i3));
    for part in [&parts.0, &parts.1, &parts.2] {
        part.require_both_arms()?;
    }
    Ok(parts)
}

pub fn truncate(values: &DVector<f64>, bound: f64) -> DVector<f64> {
    values.map(|v| v.clamp(-bound, bound))
}

/// Switch-imputed proxy labels on `d3` from nuisances fit on `d2`.
pub fn build_proxies(d2: &Dataset, d3: &Dataset, spec_f: &KernelSpec, tilde_lambda: f64) -> Result<DVector<f64>> {
    let (f0, f1) = cate::fit_nuisances(d2, spec_f, tilde_lambda)?;
    cate::switch_impute(d3, &f0, &f1)
}

/// Index of the smallest risk, lowest index on ties. `None` when no risk is
/// finite.
pub fn argmin_first(risks: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (j, &r) in risks.iter().enumerate() {
        if !r.is_finite() {
            continue;
        }
        match best {
            Some(b) if risks[b] <= r => {}
            _ => best = Some(j),
        }
    }
    best
}

pub struct SelectInputs<'a> {
    pub d1: &'a Dataset,
    pub d2: &'a Dataset,
    pub d3: &'a Dataset,
    pub spec_f: &'a KernelSpec,
    pub bar_lambda: f64,
    pub tilde_lambda: f64,
    pub truncation: f64,
}

struct GroupFit {
    index: usize,
    outcome: std::result::Result<(f64, FittedKrr), String>,
}

/// Trains every candidate on `D1`, scores the truncated predictions against
/// the `D3` proxies, and returns the empirical risk minimizer.
///
/// Candidates sharing a stage-2 kernel share one Gram matrix; each still
/// solves its own ridge system, so the result equals running the two-stage
/// learner per candidate. A candidate whose training fails gets risk `+inf`.
pub fn select(candidates: &[CandidateConfig], inputs: &SelectInputs<'_>) -> Result<SelectionOutcome> {
    if candidates.is_empty() {
        return Err(Error::invalid("candidates", "library is empty"));
    }
    krr::check_lambda("truncation", inputs.truncation)?;
    for c in candidates {
        krr::check_lambda("lambda", c.lambda)?;
        c.stage2_spec.validate()?;
    }
    let d1 = inputs.d1;
    let (f0, f1) = cate::fit_nuisances(d1, inputs.spec_f, inputs.bar_lambda)?;
    let pseudo = cate::switch_impute(d1, &f0, &f1)?;
    let proxies = build_proxies(inputs.d2, inputs.d3, inputs.spec_f, inputs.tilde_lambda)?;

    // Group candidates by kernel, preserving first-appearance order.
    let mut groups: Vec<(KernelSpec, Vec<usize>)> = Vec::new();
    let mut lookup: HashMap<String, usize> = HashMap::new();
    for (j, c) in candidates.iter().enumerate() {
        let key = serde_json::to_string(&c.stage2_spec).expect("kernel spec serializes");
        match lookup.get(&key) {
            Some(&g) => groups[g].1.push(j),
            None => {
                lookup.insert(key, groups.len());
                groups.push((c.stage2_spec.clone(), vec![j]));
            }
        }
    }

    let n1 = d1.len() as f64;
    let fits: Vec<GroupFit> = groups
        .par_iter()
        .flat_map_iter(|(spec, members)| {
            let prepared = (|| -> Result<_> {
                let spec = spec.resolve(&d1.x)?;
                let prep = kernels::prepare(&spec, &d1.x, 0..d1.len())?;
                let gram = kernels::gram_projected(&prep.kernel, &prep.points);
                let q = kernels::project_like(&spec, &prep.kernel, &inputs.d3.x)?;
                let cross = kernels::cross_projected(&prep.kernel, &q, &prep.points);
                Ok((spec, prep, gram, cross))
            })();
            let out: Vec<GroupFit> = match prepared {
                Err(e) => members
                    .iter()
                    .map(|&j| GroupFit {
                        index: j,
                        outcome: Err(e.to_string()),
                    })
                    .collect(),
                Ok((spec, prep, gram, cross)) => members
                    .iter()
                    .map(|&j| {
                        let ridge = n1 * candidates[j].lambda;
                        let outcome = krr::solve_ridge(&gram, &pseudo, ridge)
                            .map_err(|e| e.to_string())
                            .and_then(|alpha| {
                                let preds = truncate(&(&cross * &alpha), inputs.truncation);
                                let risk = (preds - &proxies).norm_squared() / proxies.len() as f64;
                                if !risk.is_finite() {
                                    return Err("non-finite risk".to_string());
                                }
                                let model = FittedKrr::from_parts(
                                    spec.clone(),
                                    prep.kernel.clone(),
                                    prep.points.clone(),
                                    d1.x.clone(),
                                    alpha,
                                    ridge,
                                    d1.len(),
                                );
                                Ok((risk, model))
                            });
                        GroupFit { index: j, outcome }
                    })
                    .collect(),
            };
            out
        })
        .collect();

    let mut risks = vec![f64::INFINITY; candidates.len()];
    let mut estimators: Vec<Option<CateEstimator>> = vec![None; candidates.len()];
    let mut failures = Vec::new();
    for fit in fits {
        match fit.outcome {
            Ok((risk, second_stage)) => {
                risks[fit.index] = risk;
                estimators[fit.index] = Some(CateEstimator {
                    nuisance0: f0.clone(),
                    nuisance1: f1.clone(),
                    nuisance_spec: f0.spec().clone(),
                    stage2_spec: second_stage.spec().clone(),
                    second_stage,
                    bar_lambda: inputs.bar_lambda,
                    lambda: candidates[fit.index].lambda,
                });
            }
            Err(msg) => failures.push((fit.index, msg)),
        }
    }
    failures.sort_by_key(|f| f.0);
    let chosen = argmin_first(&risks).ok_or(Error::NoCandidateSurvived(candidates.len()))?;
    Ok(SelectionOutcome {
        result: SelectionResult {
            chosen,
            truncation_level: inputs.truncation,
            proxy_risks: risks,
            candidates: candidates.to_vec(),
            failures,
        },
        estimators,
    })
}

/// Splits `data` with `seed` and runs [`select`].
pub fn select_on_splits(
    candidates: &[CandidateConfig],
    data: &Dataset,
    seed: u64,
    spec_f: &KernelSpec,
    bar_lambda: Option<f64>,
    tilde_lambda: Option<f64>,
    truncation: f64,
) -> Result<SelectionOutcome> {
    let (d1, d2, d3) = split_three(data, seed)?;
    let inputs = SelectInputs {
        bar_lambda: bar_lambda.unwrap_or_else(|| cate::default_nuisance_lambda(d1.len())),
        tilde_lambda: tilde_lambda.unwrap_or_else(|| cate::default_nuisance_lambda(d2.len())),
        d1: &d1,
        d2: &d2,
        d3: &d3,
        spec_f,
        truncation,
    };
    select(candidates, &inputs)
}
