use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::baselines;
use crate::cate::{self, CatePredictor, Dataset};
use crate::config::{expand_candidates, CandidateTemplate, KernelsSection, Method, SelectionSection};
use crate::dgp::{self, Scenario, ScenarioSpec};
use crate::error::{Error, Result};
use crate::selection::{self, CandidateConfig, SelectInputs};

/// Largest tolerated share of failed replications.
pub const MAX_FAILURE_RATE: f64 = 0.10;

/// Everything the methods need besides the data.
#[derive(Clone, Debug)]
pub struct MethodSettings {
    pub kernels: KernelsSection,
    pub candidates: Vec<CandidateTemplate>,
    pub selection: SelectionSection,
    pub cv_folds: usize,
}

impl MethodSettings {
    pub fn from_config(cfg: &crate::config::Config) -> Self {
        MethodSettings {
            kernels: cfg.kernels.clone(),
            candidates: cfg.candidates.clone(),
            selection: cfg.selection.clone(),
            cv_folds: cfg.execution.cv_folds,
        }
    }

    pub fn candidates_for(&self, n: usize) -> Vec<CandidateConfig> {
        expand_candidates(&self.candidates, &self.selection.lambda_grid.values(n))
    }
}

pub struct ZeroPredictor;

impl CatePredictor for ZeroPredictor {
    fn predict_cate(&self, xq: &DMatrix<f64>) -> Result<DVector<f64>> {
        Ok(DVector::zeros(xq.nrows()))
    }
}

/// A trained method plus what it chose, if it chooses anything.
pub struct MethodFit {
    pub predictor: Box<dyn CatePredictor>,
    pub selected: Option<CandidateConfig>,
}

fn missing(what: &str) -> Error {
    Error::Config(format!("{what} is not configured"))
}

/// Trains `method` on `data`. `seed` drives every split and fold inside the
/// method; the grid of lambdas is built for the full `data.len()`.
pub fn fit_method(method: Method, data: &Dataset, settings: &MethodSettings, seed: u64) -> Result<MethodFit> {
    let n = data.len();
    let sel = &settings.selection;
    let spec_f = &settings.kernels.nuisance;
    let grid = sel.lambda_grid.values(n);
    let fit: MethodFit = match method {
        Method::Ours => {
            let truncation = sel.truncation.ok_or_else(|| missing("selection.truncation"))?;
            let candidates = settings.candidates_for(n);
            let (d1, d2, d3) = selection::split_three(data, seed)?;
            let inputs = SelectInputs {
                d1: &d1,
                d2: &d2,
                d3: &d3,
                spec_f,
                bar_lambda: sel.nuisance_lambda.at(d1.len()),
                tilde_lambda: sel.proxy_lambda.at(d2.len()),
                truncation,
            };
            let out = selection::select(&candidates, &inputs)?;
            MethodFit {
                selected: Some(out.result.chosen_candidate().clone()),
                predictor: Box::new(out.selected()),
            }
        }
        Method::OursFixed => {
            let stage2 = settings
                .kernels
                .fixed_stage2
                .as_ref()
                .ok_or_else(|| missing("kernels.fixed_stage2"))?;
            let lambda = sel.fixed_lambda.ok_or_else(|| missing("selection.fixed_lambda"))?.at(n);
            let est = cate::fit_cate(data, spec_f, stage2, sel.nuisance_lambda.at(n), lambda)?;
            MethodFit {
                predictor: Box::new(est),
                selected: None,
            }
        }
        Method::PlugIn => MethodFit {
            predictor: Box::new(baselines::plugin_cate(data, spec_f, &grid, settings.cv_folds, seed)?),
            selected: None,
        },
        Method::DrLearner => {
            let stage2 = settings.kernels.dr_stage2.as_ref().ok_or_else(|| missing("kernels.dr_stage2"))?;
            MethodFit {
                predictor: Box::new(baselines::dr_learner(data, spec_f, stage2, &grid, settings.cv_folds, seed)?),
                selected: None,
            }
        }
        Method::Zero => MethodFit {
            predictor: Box::new(ZeroPredictor),
            selected: None,
        },
    };
    Ok(fit)
}

pub fn mse(pred: &DVector<f64>, truth: &DVector<f64>) -> f64 {
    (pred - truth).norm_squared() / truth.len() as f64
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RepRecord {
    pub rep: usize,
    pub seed: u64,
    pub mse: Option<f64>,
    pub runtime_sec: f64,
    pub selected: Option<String>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ExperimentReport {
    pub scenario: ScenarioSpec,
    pub method: Method,
    pub reps: Vec<RepRecord>,
    pub mean_mse: f64,
    /// Sample standard deviation over `sqrt(R)`; zero when `R = 1`.
    pub se_mean: f64,
    pub runtime_sec: f64,
    pub failed: usize,
}

impl ExperimentReport {
    pub fn per_rep_mse(&self) -> Vec<f64> {
        self.reps.iter().filter_map(|r| r.mse).collect()
    }

    pub fn from_records(scenario: ScenarioSpec, method: Method, reps: Vec<RepRecord>) -> Result<Self> {
        let values: Vec<f64> = reps.iter().filter_map(|r| r.mse).collect();
        let failed = reps.len() - values.len();
        if failed as f64 > MAX_FAILURE_RATE * reps.len() as f64 || values.is_empty() {
            return Err(Error::TooManyFailures {
                failed,
                total: reps.len(),
            });
        }
        let (mean_mse, se_mean) = mean_and_se(&values);
        Ok(ExperimentReport {
            scenario,
            method,
            runtime_sec: reps.iter().map(|r| r.runtime_sec).sum(),
            reps,
            mean_mse,
            se_mean,
            failed,
        })
    }
}

pub fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let r = values.len() as f64;
    let mean = values.iter().sum::<f64>() / r;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (r - 1.0);
    (mean, (var / r).sqrt())
}

/// One replication: draw data with `seed`, draw a test grid, fit and score
/// every method on the same sample.
pub fn run_replication(
    scenario: &ScenarioSpec,
    methods: &[Method],
    settings: &MethodSettings,
    rep: usize,
    seed: u64,
    test_points: usize,
) -> Vec<RepRecord> {
    let spec = scenario.with_seed(seed);
    let prepared = dgp::generate(&spec).and_then(|(data, sc)| {
        let grid = dgp::test_grid(&spec, test_points, seed)?;
        let truth = sc.true_cate(&grid);
        Ok((data, grid, truth))
    });
    methods
        .iter()
        .map(|&m| {
            let start = Instant::now();
            let outcome = prepared.as_ref().map_err(|e| e.to_string()).and_then(|(data, grid, truth)| {
                let fit = fit_method(m, data, settings, seed).map_err(|e| e.to_string())?;
                let pred = fit.predictor.predict_cate(grid).map_err(|e| e.to_string())?;
                let value = mse(&pred, truth);
                if !value.is_finite() {
                    return Err("non-finite MSE".to_string());
                }
                Ok((value, fit.selected.map(|c| c.label)))
            });
            let runtime_sec = start.elapsed().as_secs_f64();
            match outcome {
                Ok((value, selected)) => RepRecord {
                    rep,
                    seed,
                    mse: Some(value),
                    runtime_sec,
                    selected,
                    error: None,
                },
                Err(e) => RepRecord {
                    rep,
                    seed,
                    mse: None,
                    runtime_sec,
                    selected: None,
                    error: Some(e),
                },
            }
        })
        .collect()
}

/// Runs `reps` replications with seeds `master_seed + r`. All methods share
/// the dataset of a replication, so comparisons are paired.
pub fn run_experiment(
    scenario: &ScenarioSpec,
    methods: &[Method],
    settings: &MethodSettings,
    reps: usize,
    master_seed: u64,
    test_points: usize,
) -> Result<Vec<ExperimentReport>> {
    scenario.validate()?;
    if reps == 0 {
        return Err(Error::invalid("reps", "must be at least 1"));
    }
    let rows: Vec<Vec<RepRecord>> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let seed = master_seed.wrapping_add(r as u64);
            run_replication(scenario, methods, settings, r, seed, test_points)
        })
        .collect();
    let base = scenario.with_seed(master_seed);
    methods
        .iter()
        .enumerate()
        .map(|(k, &m)| {
            let recs = rows.iter().map(|row| row[k].clone()).collect();
            ExperimentReport::from_records(base.clone(), m, recs)
        })
        .collect()
}

/// Shorthand used by examples and tests.
pub fn scenario_spec(kind: Scenario, n: usize, sigma: f64) -> ScenarioSpec {
    ScenarioSpec::new(kind, n, sigma, 0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_rep_has_zero_se() {
        assert_eq!(mean_and_se(&[0.3]), (0.3, 0.0));
        let (m, se) = mean_and_se(&[1.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((se - 1.0).abs() < 1e-15);
    }

    #[test]
    fn failure_budget() {
        let ok = |rep| RepRecord {
            rep,
            seed: 0,
            mse: Some(1.0),
            runtime_sec: 0.0,
            selected: None,
            error: None,
        };
        let bad = |rep| RepRecord {
            mse: None,
            error: Some("x".into()),
            ..ok(rep)
        };
        let spec = scenario_spec(Scenario::Univariate, 10, 1.0);
        let mut recs: Vec<RepRecord> = (0..9).map(ok).collect();
        recs.push(bad(9));
        let rep = ExperimentReport::from_records(spec.clone(), Method::Zero, recs.clone()).unwrap();
        assert_eq!(rep.failed, 1);
        assert_eq!(rep.per_rep_mse().len(), 9);
        recs[0] = bad(0);
        assert!(matches!(
            ExperimentReport::from_records(spec, Method::Zero, recs),
            Err(Error::TooManyFailures { failed: 2, total: 10 })
        ));
    }
}
