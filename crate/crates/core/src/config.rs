//! JSON experiment configuration.
//!
//! ```json
//! {
//!   "scenario":   {"kind": "univariate", "n": 1000, "sigma": 1.0},
//!   "kernels":    {"nuisance": {"family": "sobolev", "order_or_nu": 1},
//!                  "dr_stage2": {"family": "sobolev", "order_or_nu": 2}},
//!   "candidates": [{"label": "sobolev2", "kernel": {"family": "sobolev", "order_or_nu": 2},
//!                   "lambda": "grid"}],
//!   "selection":  {"truncation": 4.0},
//!   "methods":    ["ours", "plugin", "dr_learner"],
//!   "execution":  {"reps": 20, "seed": 0}
//! }
//! ```
//!
//! Unknown keys are rejected at every level.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::baselines;
use crate::dgp::Scenario;
use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::selection::CandidateConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Two-stage learner with three-way-split model selection.
    Ours,
    /// Two-stage learner on the full sample with one fixed stage-2 kernel
    /// and a regularizer rule; used for rate sweeps.
    OursFixed,
    #[serde(rename = "plugin")]
    PlugIn,
    DrLearner,
    /// Predicts zero everywhere; a flat control for rate sweeps.
    Zero,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Ours => "ours",
            Method::OursFixed => "ours_fixed",
            Method::PlugIn => "plugin",
            Method::DrLearner => "dr_learner",
            Method::Zero => "zero",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            Method::Ours => "Ours",
            Method::OursFixed => "Ours (fixed)",
            Method::PlugIn => "Plug-in KRR",
            Method::DrLearner => "DR-Learner KRR",
            Method::Zero => "Zero",
        }
    }
}

/// A regularization level as a function of the sample size it is applied to.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case", deny_unknown_fields)]
pub enum RegRule {
    /// `c / n`
    InverseN { c: f64 },
    /// `c log(n) / n`
    LogN { c: f64 },
    /// `c n^(-p)`
    Power { c: f64, p: f64 },
    Value { value: f64 },
}

impl RegRule {
    pub fn at(self, n: usize) -> f64 {
        let nf = n as f64;
        match self {
            RegRule::InverseN { c } => c / nf,
            RegRule::LogN { c } => c * nf.ln() / nf,
            RegRule::Power { c, p } => c * nf.powf(-p),
            RegRule::Value { value } => value,
        }
    }

    fn validate(self, field: &str) -> Result<()> {
        let ok = match self {
            RegRule::InverseN { c } | RegRule::LogN { c } => c > 0.0 && c.is_finite(),
            RegRule::Power { c, p } => c > 0.0 && c.is_finite() && p.is_finite(),
            RegRule::Value { value } => value > 0.0 && value.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("{field}: regularizer must be positive and finite")))
        }
    }
}

impl Default for RegRule {
    fn default() -> Self {
        RegRule::InverseN { c: 0.01 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GridRule {
    /// `{2^(j-1) / n : j = 1..=count}` with `n` the full sample size.
    Dyadic { count: usize },
    Explicit { values: Vec<f64> },
}

impl GridRule {
    pub fn values(&self, n: usize) -> Vec<f64> {
        match self {
            GridRule::Dyadic { count } => baselines::dyadic_grid(n, *count),
            GridRule::Explicit { values } => values.clone(),
        }
    }

    fn validate(&self, field: &str) -> Result<()> {
        match self {
            GridRule::Dyadic { count } if *count == 0 => {
                Err(Error::Config(format!("{field}.count: must be at least 1")))
            }
            GridRule::Explicit { values } if values.is_empty() => {
                Err(Error::Config(format!("{field}.values: must be non-empty")))
            }
            GridRule::Explicit { values } => {
                for (i, v) in values.iter().enumerate() {
                    if !(*v > 0.0 && v.is_finite()) {
                        return Err(Error::Config(format!("{field}.values[{i}]: lambda must be positive, got {v}")));
                    }
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

impl Default for GridRule {
    fn default() -> Self {
        GridRule::Dyadic { count: 10 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridTag {
    Grid,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LambdaChoice {
    Value(f64),
    /// Expand over the selection lambda grid.
    Grid(GridTag),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CandidateTemplate {
    pub label: String,
    pub kernel: KernelSpec,
    pub lambda: LambdaChoice,
}

impl CandidateTemplate {
    pub fn new(label: impl Into<String>, kernel: KernelSpec, lambda: LambdaChoice) -> Self {
        CandidateTemplate {
            label: label.into(),
            kernel,
            lambda,
        }
    }
}

/// Expands `"grid"` lambdas into one candidate per grid value. Expanded
/// labels are `label@lambda`.
pub fn expand_candidates(templates: &[CandidateTemplate], grid: &[f64]) -> Vec<CandidateConfig> {
    let mut out = Vec::new();
    for t in templates {
        match t.lambda {
            LambdaChoice::Value(l) => out.push(CandidateConfig::new(t.label.clone(), t.kernel.clone(), l)),
            LambdaChoice::Grid(_) => {
                for &l in grid {
                    out.push(CandidateConfig::new(format!("{}@{l:.4e}", t.label), t.kernel.clone(), l));
                }
            }
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SampleSizes {
    One(usize),
    Many(Vec<usize>),
}

impl SampleSizes {
    pub fn to_vec(&self) -> Vec<usize> {
        match self {
            SampleSizes::One(n) => vec![*n],
            SampleSizes::Many(v) => v.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSection {
    pub kind: Scenario,
    pub n: SampleSizes,
    #[serde(default = "one")]
    pub sigma: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub covariates: Vec<String>,
    pub treatment: String,
    pub outcome: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelsSection {
    pub nuisance: KernelSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dr_stage2: Option<KernelSpec>,
    /// Stage-2 kernel of the `ours_fixed` method.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_stage2: Option<KernelSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectionSection {
    /// Truncation level `B`. Required for simulations; defaults to twice the
    /// largest absolute rescaled outcome for CSV data.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truncation: Option<f64>,
    #[serde(default)]
    pub nuisance_lambda: RegRule,
    #[serde(default)]
    pub proxy_lambda: RegRule,
    #[serde(default)]
    pub lambda_grid: GridRule,
    /// Main regularizer of the `ours_fixed` method.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_lambda: Option<RegRule>,
}

impl Default for SelectionSection {
    fn default() -> Self {
        SelectionSection {
            truncation: None,
            nuisance_lambda: RegRule::default(),
            proxy_lambda: RegRule::default(),
            lambda_grid: GridRule::default(),
            fixed_lambda: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExecutionSection {
    #[serde(default = "default_reps")]
    pub reps: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_test_points")]
    pub test_points: usize,
    #[serde(default = "default_folds")]
    pub cv_folds: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    /// Wall-clock timings make reports non-reproducible, so they are only
    /// written on request.
    #[serde(default)]
    pub record_runtime: bool,
}

fn default_reps() -> usize {
    1
}
fn default_test_points() -> usize {
    crate::dgp::DEFAULT_TEST_POINTS
}
fn default_folds() -> usize {
    baselines::DEFAULT_FOLDS
}

impl Default for ExecutionSection {
    fn default() -> Self {
        ExecutionSection {
            reps: default_reps(),
            seed: 0,
            test_points: default_test_points(),
            cv_folds: default_folds(),
            threads: None,
            record_runtime: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RatesSection {
    pub n_list: Vec<usize>,
    pub method: Method,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theoretical_exponent: Option<f64>,
    /// Accepted interval for the fitted slope.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slope_band: Option<[f64; 2]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<ScenarioSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<DataSection>,
    pub kernels: KernelsSection,
    #[serde(default)]
    pub candidates: Vec<CandidateTemplate>,
    #[serde(default)]
    pub selection: SelectionSection,
    #[serde(default)]
    pub methods: Vec<Method>,
    #[serde(default)]
    pub execution: ExecutionSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rates: Option<RatesSection>,
}

/// What the configuration is about to be used for.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Purpose {
    Simulate,
    Fit,
    Rates,
}

fn kernel_field(field: &str, spec: &KernelSpec) -> Result<()> {
    spec.validate().map_err(|e| Error::Config(format!("{field}: {e}")))
}

impl Config {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Methods for a simulation; when none are listed all three comparison
    /// methods run.
    pub fn simulation_methods(&self) -> Vec<Method> {
        if self.methods.is_empty() {
            vec![Method::Ours, Method::PlugIn, Method::DrLearner]
        } else {
            self.methods.clone()
        }
    }

    pub fn validate(&self, purpose: Purpose) -> Result<()> {
        kernel_field("kernels.nuisance", &self.kernels.nuisance)?;
        if let Some(k) = &self.kernels.dr_stage2 {
            kernel_field("kernels.dr_stage2", k)?;
        }
        if let Some(k) = &self.kernels.fixed_stage2 {
            kernel_field("kernels.fixed_stage2", k)?;
        }
        for (i, c) in self.candidates.iter().enumerate() {
            kernel_field(&format!("candidates[{i}].kernel"), &c.kernel)?;
            if let LambdaChoice::Value(l) = c.lambda {
                if !(l > 0.0 && l.is_finite()) {
                    return Err(Error::Config(format!("candidates[{i}].lambda: must be positive, got {l}")));
                }
            }
        }
        let sel = &self.selection;
        if let Some(b) = sel.truncation {
            if !(b > 0.0 && b.is_finite()) {
                return Err(Error::Config(format!("selection.truncation: must be positive, got {b}")));
            }
        }
        sel.nuisance_lambda.validate("selection.nuisance_lambda")?;
        sel.proxy_lambda.validate("selection.proxy_lambda")?;
        sel.lambda_grid.validate("selection.lambda_grid")?;
        if let Some(r) = sel.fixed_lambda {
            r.validate("selection.fixed_lambda")?;
        }
        let ex = &self.execution;
        if ex.reps == 0 {
            return Err(Error::Config("execution.reps: must be at least 1".into()));
        }
        if ex.test_points == 0 {
            return Err(Error::Config("execution.test_points: must be at least 1".into()));
        }
        if ex.cv_folds < 2 {
            return Err(Error::Config("execution.cv_folds: must be at least 2".into()));
        }
        if ex.threads == Some(0) {
            return Err(Error::Config("execution.threads: must be at least 1".into()));
        }

        match purpose {
            Purpose::Simulate | Purpose::Rates => {
                let sc = self
                    .scenario
                    .as_ref()
                    .ok_or_else(|| Error::Config("scenario: section required".into()))?;
                if !(sc.sigma > 0.0 && sc.sigma.is_finite()) {
                    return Err(Error::Config(format!("scenario.sigma: must be positive, got {}", sc.sigma)));
                }
                if purpose == Purpose::Simulate {
                    let ns = sc.n.to_vec();
                    if ns.is_empty() {
                        return Err(Error::Config("scenario.n: must list at least one size".into()));
                    }
                    if let Some(&n) = ns.iter().find(|&&n| n < 10) {
                        return Err(Error::Config(format!("scenario.n: must be at least 10, got {n}")));
                    }
                    for m in self.simulation_methods() {
                        self.check_method(m)?;
                    }
                } else {
                    let rates = self
                        .rates
                        .as_ref()
                        .ok_or_else(|| Error::Config("rates: section required".into()))?;
                    if rates.n_list.len() < 3 {
                        return Err(Error::Config(format!(
                            "rates.n_list: need at least 3 sample sizes, got {}",
                            rates.n_list.len()
                        )));
                    }
                    if rates.n_list.windows(2).any(|w| w[0] >= w[1]) {
                        return Err(Error::Config("rates.n_list: must be strictly increasing".into()));
                    }
                    if rates.n_list[0] < 10 {
                        return Err(Error::Config("rates.n_list: sizes must be at least 10".into()));
                    }
                    if let Some([lo, hi]) = rates.slope_band {
                        if lo > hi {
                            return Err(Error::Config("rates.slope_band: lower bound exceeds upper".into()));
                        }
                    }
                    self.check_method(rates.method)?;
                }
            }
            Purpose::Fit => {
                let data = self
                    .data
                    .as_ref()
                    .ok_or_else(|| Error::Config("data: section required".into()))?;
                if data.covariates.is_empty() {
                    return Err(Error::Config("data.covariates: must name at least one column".into()));
                }
                if self.candidates.is_empty() {
                    return Err(Error::Config("candidates: library is empty".into()));
                }
            }
        }
        Ok(())
    }

    fn check_method(&self, m: Method) -> Result<()> {
        match m {
            Method::Ours => {
                if self.candidates.is_empty() {
                    return Err(Error::Config("candidates: library is empty".into()));
                }
                if self.selection.truncation.is_none() {
                    return Err(Error::Config("selection.truncation: required for simulations".into()));
                }
            }
            Method::OursFixed => {
                if self.kernels.fixed_stage2.is_none() {
                    return Err(Error::Config("kernels.fixed_stage2: required by ours_fixed".into()));
                }
                if self.selection.fixed_lambda.is_none() {
                    return Err(Error::Config("selection.fixed_lambda: required by ours_fixed".into()));
                }
            }
            Method::DrLearner => {
                if self.kernels.dr_stage2.is_none() {
                    return Err(Error::Config("kernels.dr_stage2: required by dr_learner".into()));
                }
            }
            Method::PlugIn | Method::Zero => {}
        }
        Ok(())
    }
}

/// Ready-made configurations for the three synthetic scenarios.
pub mod presets {
    use super::*;
    use crate::dgp::SPARSE_DIM;

    pub fn univariate(n: usize, reps: usize, seed: u64) -> Config {
        Config {
            scenario: Some(ScenarioSection {
                kind: Scenario::Univariate,
                n: SampleSizes::One(n),
                sigma: 1.0,
            }),
            data: None,
            kernels: KernelsSection {
                nuisance: KernelSpec::sobolev(1),
                dr_stage2: Some(KernelSpec::sobolev(2)),
                fixed_stage2: Some(KernelSpec::sobolev(2)),
            },
            candidates: vec![CandidateTemplate::new(
                "sobolev2",
                KernelSpec::sobolev(2),
                LambdaChoice::Grid(GridTag::Grid),
            )],
            selection: SelectionSection {
                truncation: Some(4.0),
                ..SelectionSection::default()
            },
            methods: vec![Method::Ours, Method::PlugIn, Method::DrLearner],
            execution: ExecutionSection {
                reps,
                seed,
                ..ExecutionSection::default()
            },
            rates: None,
        }
    }

    /// The six-kernel stage-2 dictionary: Matérn 1.5 / 2.5 and RBF, each on
    /// all coordinates and on the first four.
    pub fn multivariate_dictionary() -> Vec<CandidateTemplate> {
        let sub = 0..SPARSE_DIM;
        let grid = LambdaChoice::Grid(GridTag::Grid);
        vec![
            CandidateTemplate::new("matern1.5-all", KernelSpec::matern(1.5, 2.6), grid),
            CandidateTemplate::new("matern2.5-all", KernelSpec::matern(2.5, 2.4), grid),
            CandidateTemplate::new("matern1.5-sub", KernelSpec::matern(1.5, 1.6).on_coords(sub.clone()), grid),
            CandidateTemplate::new("matern2.5-sub", KernelSpec::matern(2.5, 1.5).on_coords(sub.clone()), grid),
            CandidateTemplate::new("rbf-all", KernelSpec::rbf(2.1), grid),
            CandidateTemplate::new("rbf-sub", KernelSpec::rbf(1.3).on_coords(sub), grid),
        ]
    }

    pub fn multivariate(scenario: Scenario, n: usize, reps: usize, seed: u64) -> Config {
        let dr_stage2 = match scenario {
            Scenario::MultiSparse => KernelSpec::matern(2.5, 1.5).on_coords(0..SPARSE_DIM),
            _ => KernelSpec::matern(2.5, 2.4),
        };
        Config {
            scenario: Some(ScenarioSection {
                kind: scenario,
                n: SampleSizes::One(n),
                sigma: 1.0,
            }),
            data: None,
            kernels: KernelsSection {
                nuisance: KernelSpec::matern(1.5, 2.6),
                dr_stage2: Some(dr_stage2),
                fixed_stage2: None,
            },
            candidates: multivariate_dictionary(),
            selection: SelectionSection {
                truncation: Some(2.0),
                ..SelectionSection::default()
            },
            methods: vec![Method::Ours, Method::PlugIn, Method::DrLearner],
            execution: ExecutionSection {
                reps,
                seed,
                ..ExecutionSection::default()
            },
            rates: None,
        }
    }
}
