//! Synthetic data-generating processes with known CATE.
//!
//! | scenario      | x                | f_0                    | h*                         |
//! |---------------|------------------|------------------------|----------------------------|
//! | `univariate`  | U[0,1]           | 5(|x-0.4| + |x-0.8|)   | x^2                        |
//! | `multi_dense` | U[-1,1]^10       | (2/d) sum sin(x_j)     | (0.5/d) sum x_j            |
//! | `multi_sparse`| U[-1,1]^10       | (2/d) sum sin(x_j)     | (0.3/4) sum_{j<4} x_j^2    |
//!
//! Treatment is Bernoulli(pi(x)) with `pi(x) = clip(sin(5 ||x||), 0.1, 0.9)`
//! and `y = f_0(x) + a h*(x) + N(0, sigma^2)`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::cate::Dataset;
use crate::error::{Error, Result};
use crate::seeds;

pub const MULTI_DIM: usize = 10;
pub const SPARSE_DIM: usize = 4;
pub const PROPENSITY_BOUNDS: (f64, f64) = (0.1, 0.9);
pub const DEFAULT_TEST_POINTS: usize = 3000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Univariate,
    MultiDense,
    MultiSparse,
}

impl Scenario {
    pub fn dim(self) -> usize {
        match self {
            Scenario::Univariate => 1,
            Scenario::MultiDense | Scenario::MultiSparse => MULTI_DIM,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Scenario::Univariate => "univariate",
            Scenario::MultiDense => "multi_dense",
            Scenario::MultiSparse => "multi_sparse",
        }
    }

    pub fn baseline(self, x: &[f64]) -> f64 {
        match self {
            Scenario::Univariate => 5.0 * ((x[0] - 0.4).abs() + (x[0] - 0.8).abs()),
            _ => 2.0 / x.len() as f64 * x.iter().map(|v| v.sin()).sum::<f64>(),
        }
    }

    pub fn cate(self, x: &[f64]) -> f64 {
        match self {
            Scenario::Univariate => x[0] * x[0],
            Scenario::MultiDense => 0.5 / x.len() as f64 * x.iter().sum::<f64>(),
            Scenario::MultiSparse => {
                0.3 / SPARSE_DIM as f64 * x[..SPARSE_DIM].iter().map(|v| v * v).sum::<f64>()
            }
        }
    }

    pub fn propensity(self, x: &[f64]) -> f64 {
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        (5.0 * norm).sin().clamp(PROPENSITY_BOUNDS.0, PROPENSITY_BOUNDS.1)
    }

    fn draw_covariates<R: Rng>(self, rng: &mut R, out: &mut [f64]) {
        for v in out.iter_mut() {
            *v = match self {
                Scenario::Univariate => rng.random::<f64>(),
                _ => rng.random_range(-1.0..1.0),
            };
        }
    }

    /// Applies `f` to every row of `x`.
    pub fn eval_rows(self, x: &DMatrix<f64>, f: impl Fn(Scenario, &[f64]) -> f64) -> DVector<f64> {
        let mut row = vec![0.0; x.ncols()];
        DVector::from_iterator(
            x.nrows(),
            (0..x.nrows()).map(|i| {
                for (j, v) in row.iter_mut().enumerate() {
                    *v = x[(i, j)];
                }
                f(self, &row)
            }),
        )
    }

    pub fn true_cate(self, x: &DMatrix<f64>) -> DVector<f64> {
        self.eval_rows(x, Scenario::cate)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub scenario: Scenario,
    pub n: usize,
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_sigma() -> f64 {
    1.0
}

impl ScenarioSpec {
    pub fn new(scenario: Scenario, n: usize, sigma: f64, seed: u64) -> Self {
        ScenarioSpec { scenario, n, sigma, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 10 {
            return Err(Error::invalid("n", format!("must be at least 10, got {}", self.n)));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::invalid("sigma", format!("must be positive, got {}", self.sigma)));
        }
        Ok(())
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        ScenarioSpec { seed, ..self.clone() }
    }
}

/// Draws a sample. The returned scenario carries the exact `h*` and `pi`.
pub fn generate(spec: &ScenarioSpec) -> Result<(Dataset, Scenario)> {
    spec.validate()?;
    Ok((generate_with_noise(spec, spec.sigma), spec.scenario))
}

/// Same draw as [`generate`] but with an arbitrary noise scale, including
/// zero.
pub fn generate_with_noise(spec: &ScenarioSpec, sigma: f64) -> Dataset {
    let sc = spec.scenario;
    let d = sc.dim();
    let mut rng = seeds::rng(spec.seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut x = DMatrix::zeros(spec.n, d);
    let mut a = Vec::with_capacity(spec.n);
    let mut y = DVector::zeros(spec.n);
    let mut row = vec![0.0; d];
    for i in 0..spec.n {
        sc.draw_covariates(&mut rng, &mut row);
        for (j, &v) in row.iter().enumerate() {
            x[(i, j)] = v;
        }
        let treated = rng.random::<f64>() < sc.propensity(&row);
        let eps: f64 = normal.sample(&mut rng);
        let ai = u8::from(treated);
        y[i] = sc.baseline(&row) + f64::from(ai) * sc.cate(&row) + sigma * eps;
        a.push(ai);
    }
    Dataset { x, a, y }
}

/// Fresh covariate draws from the scenario's marginal.
pub fn test_grid(spec: &ScenarioSpec, q: usize, seed: u64) -> Result<DMatrix<f64>> {
    if q == 0 {
        return Err(Error::invalid("q", "test grid needs at least one point"));
    }
    let sc = spec.scenario;
    let d = sc.dim();
    let mut rng = seeds::rng(seeds::derive_seed(seed, seeds::TAG_TEST_GRID));
    let mut row = vec![0.0; d];
    let mut x = DMatrix::zeros(q, d);
    for i in 0..q {
        sc.draw_covariates(&mut rng, &mut row);
        for (j, &v) in row.iter().enumerate() {
            x[(i, j)] = v;
        }
    }
    Ok(x)
}
