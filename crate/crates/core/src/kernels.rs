//! Kernel families, Gram matrices and the median length-scale heuristic.
//!
//! Three families are supported:
//!
//! * `Sobolev`: the reproducing kernel of the Sobolev space `H^m([0,1])` under
//!   the smoothing-spline inner product, written with Bernoulli polynomials
//!   and tensorized over the active coordinates;
//! * `Matern` with smoothness `nu` in `{1.5, 2.5}`;
//! * `Rbf`, the Gaussian kernel `exp(-r^2 / (2 l^2))`.
//!
//! Every kernel reads only its `active_coords`, which is how a stage-2
//! hypothesis space restricted to a known subset of covariates is expressed.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Highest supported Sobolev order (needs Bernoulli polynomials up to `2m`).
pub const MAX_SOBOLEV_ORDER: u32 = 5;

const SQRT_3: f64 = 1.732_050_807_568_877_2;
const SQRT_5: f64 = 2.236_067_977_499_79;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelFamily {
    Sobolev,
    Matern,
    Rbf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MedianTag {
    Median,
}

/// Either a fixed length scale or a request to pick one with the median
/// heuristic on the data the kernel is fit to.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LengthScale {
    Fixed(f64),
    Median(MedianTag),
}

impl LengthScale {
    pub const MEDIAN: LengthScale = LengthScale::Median(MedianTag::Median);
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AllTag {
    All,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ActiveCoords {
    All(AllTag),
    Subset(Vec<usize>),
}

impl ActiveCoords {
    pub const ALL: ActiveCoords = ActiveCoords::All(AllTag::All);

    pub fn subset(coords: impl IntoIterator<Item = usize>) -> Self {
        ActiveCoords::Subset(coords.into_iter().collect())
    }

    /// Resolved coordinate list for inputs of dimension `d`.
    pub fn indices(&self, d: usize) -> Result<Vec<usize>> {
        match self {
            ActiveCoords::All(_) => Ok((0..d).collect()),
            ActiveCoords::Subset(idx) => {
                if idx.is_empty() {
                    return Err(Error::invalid("active_coords", "empty subset"));
                }
                let max = *idx.iter().max().unwrap();
                if max >= d {
                    return Err(Error::DimensionMismatch {
                        expected: max + 1,
                        got: d,
                    });
                }
                Ok(idx.clone())
            }
        }
    }

    pub fn is_all(&self) -> bool {
        matches!(self, ActiveCoords::All(_))
    }
}

impl Default for ActiveCoords {
    fn default() -> Self {
        ActiveCoords::ALL
    }
}

/// Declarative kernel description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSpec {
    pub family: KernelFamily,
    /// Sobolev order `m` or Matérn smoothness `nu`; ignored for RBF.
    #[serde(default)]
    pub order_or_nu: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub length_scale: Option<LengthScale>,
    #[serde(default)]
    pub active_coords: ActiveCoords,
}

impl KernelSpec {
    pub fn sobolev(order: u32) -> Self {
        KernelSpec {
            family: KernelFamily::Sobolev,
            order_or_nu: order as f64,
            length_scale: None,
            active_coords: ActiveCoords::ALL,
        }
    }

    pub fn matern(nu: f64, length_scale: f64) -> Self {
        KernelSpec {
            family: KernelFamily::Matern,
            order_or_nu: nu,
            length_scale: Some(LengthScale::Fixed(length_scale)),
            active_coords: ActiveCoords::ALL,
        }
    }

    pub fn rbf(length_scale: f64) -> Self {
        KernelSpec {
            family: KernelFamily::Rbf,
            order_or_nu: 0.0,
            length_scale: Some(LengthScale::Fixed(length_scale)),
            active_coords: ActiveCoords::ALL,
        }
    }

    pub fn with_median_length_scale(mut self) -> Self {
        self.length_scale = Some(LengthScale::MEDIAN);
        self
    }

    pub fn on_coords(mut self, coords: impl IntoIterator<Item = usize>) -> Self {
        self.active_coords = ActiveCoords::subset(coords);
        self
    }

    /// Structural checks that do not depend on data.
    pub fn validate(&self) -> Result<()> {
        match self.family {
            KernelFamily::Sobolev => {
                let m = self.order_or_nu;
                if m.fract() != 0.0 || m < 1.0 || m > MAX_SOBOLEV_ORDER as f64 {
                    return Err(Error::invalid(
                        "order_or_nu",
                        format!("Sobolev order must be an integer in 1..={MAX_SOBOLEV_ORDER}, got {m}"),
                    ));
                }
            }
            KernelFamily::Matern => {
                if self.order_or_nu != 1.5 && self.order_or_nu != 2.5 {
                    return Err(Error::invalid(
                        "order_or_nu",
                        format!("Matérn nu must be 1.5 or 2.5, got {}", self.order_or_nu),
                    ));
                }
                self.check_length_scale()?;
            }
            KernelFamily::Rbf => self.check_length_scale()?,
        }
        if let ActiveCoords::Subset(idx) = &self.active_coords {
            if idx.is_empty() {
                return Err(Error::invalid("active_coords", "empty subset"));
            }
        }
        Ok(())
    }

    fn check_length_scale(&self) -> Result<()> {
        match self.length_scale {
            None => Err(Error::invalid("length_scale", "required for Matérn and RBF kernels")),
            Some(LengthScale::Fixed(l)) if !(l > 0.0 && l.is_finite()) => Err(Error::invalid(
                "length_scale",
                format!("must be positive and finite, got {l}"),
            )),
            _ => Ok(()),
        }
    }

    pub fn needs_resolution(&self) -> bool {
        self.family != KernelFamily::Sobolev
            && matches!(self.length_scale, Some(LengthScale::Median(_)))
    }

    /// Replaces a `"median"` length scale with the heuristic value computed
    /// on all pairs of rows of `x`. Fixed specs are returned unchanged.
    pub fn resolve(&self, x: &DMatrix<f64>) -> Result<KernelSpec> {
        self.validate()?;
        if !self.needs_resolution() {
            return Ok(self.clone());
        }
        let ls = median_heuristic_length_scale(self.family, self.order_or_nu, x, &self.active_coords)?;
        let mut out = self.clone();
        out.length_scale = Some(LengthScale::Fixed(ls));
        Ok(out)
    }

    pub(crate) fn compile(&self) -> Result<CompiledKernel> {
        self.validate()?;
        let fixed = || match self.length_scale {
            Some(LengthScale::Fixed(l)) => Ok(l),
            _ => Err(Error::UnresolvedLengthScale),
        };
        Ok(match self.family {
            KernelFamily::Sobolev => CompiledKernel::Sobolev(SobolevTerms::new(self.order_or_nu as u32)),
            KernelFamily::Matern if self.order_or_nu == 1.5 => CompiledKernel::Matern15 { ls: fixed()? },
            KernelFamily::Matern => CompiledKernel::Matern25 { ls: fixed()? },
            KernelFamily::Rbf => CompiledKernel::Rbf { ls: fixed()? },
        })
    }

    /// Short human-readable description, e.g. `matern(1.5, l=2.6)[0,1,2,3]`.
    pub fn describe(&self) -> String {
        let base = match (self.family, self.length_scale) {
            (KernelFamily::Sobolev, _) => format!("sobolev({})", self.order_or_nu),
            (KernelFamily::Matern, Some(LengthScale::Fixed(l))) => {
                format!("matern({}, l={l:.3})", self.order_or_nu)
            }
            (KernelFamily::Matern, _) => format!("matern({}, l=median)", self.order_or_nu),
            (KernelFamily::Rbf, Some(LengthScale::Fixed(l))) => format!("rbf(l={l:.3})"),
            (KernelFamily::Rbf, _) => "rbf(l=median)".to_string(),
        };
        match &self.active_coords {
            ActiveCoords::All(_) => base,
            ActiveCoords::Subset(idx) => {
                let idx: Vec<String> = idx.iter().map(|i| i.to_string()).collect();
                format!("{base}[{}]", idx.join(","))
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Bernoulli polynomials
// ---------------------------------------------------------------------------

const BERNOULLI_NUMBERS: [f64; 11] = [
    1.0,
    -0.5,
    1.0 / 6.0,
    0.0,
    -1.0 / 30.0,
    0.0,
    1.0 / 42.0,
    0.0,
    -1.0 / 30.0,
    0.0,
    5.0 / 66.0,
];

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn factorial(n: usize) -> f64 {
    (1..=n).fold(1.0, |acc, i| acc * i as f64)
}

/// Coefficients of `B_n(x)` in increasing powers of `x`.
fn bernoulli_coeffs(n: usize) -> Vec<f64> {
    let mut c = vec![0.0; n + 1];
    for (k, b) in BERNOULLI_NUMBERS.iter().enumerate().take(n + 1) {
        c[n - k] = binomial(n, k) * b;
    }
    c
}

/// The Bernoulli polynomial `B_n(x)`, `n <= 10`.
pub fn bernoulli_poly(n: usize, x: f64) -> f64 {
    assert!(n < BERNOULLI_NUMBERS.len(), "Bernoulli polynomial degree {n} unsupported");
    horner(&bernoulli_coeffs(n), x)
}

fn horner(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
}

#[derive(Clone, Debug)]
pub(crate) struct SobolevTerms {
    order: usize,
    /// Coefficients of `B_k / k!` for `k = 1..=order`.
    scaled: Vec<Vec<f64>>,
    /// Coefficients of `(-1)^{m+1} B_{2m} / (2m)!`.
    tail: Vec<f64>,
}

impl SobolevTerms {
    fn new(order: u32) -> Self {
        let m = order as usize;
        let scaled = (1..=m)
            .map(|k| {
                let f = factorial(k);
                bernoulli_coeffs(k).into_iter().map(|c| c / f).collect()
            })
            .collect();
        let sign = if m % 2 == 1 { 1.0 } else { -1.0 };
        let f2m = factorial(2 * m);
        let tail = bernoulli_coeffs(2 * m).into_iter().map(|c| sign * c / f2m).collect();
        SobolevTerms { order: m, scaled, tail }
    }

    #[inline]
    fn univariate(&self, s: f64, t: f64) -> f64 {
        let mut acc = 1.0;
        for k in 0..self.order {
            acc += horner(&self.scaled[k], s) * horner(&self.scaled[k], t);
        }
        // B_{2m} is symmetric about 1/2, so B_{2m}({s - t}) = B_{2m}(|s - t|) on [0,1].
        acc + horner(&self.tail, (s - t).abs())
    }
}

#[derive(Clone, Debug)]
pub(crate) enum CompiledKernel {
    Sobolev(SobolevTerms),
    Matern15 { ls: f64 },
    Matern25 { ls: f64 },
    Rbf { ls: f64 },
}

#[inline]
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn matern_profile(nu: f64, t: f64) -> f64 {
    if nu == 1.5 {
        let u = SQRT_3 * t;
        (1.0 + u) * (-u).exp()
    } else {
        let u = SQRT_5 * t;
        (1.0 + u + u * u / 3.0) * (-u).exp()
    }
}

impl CompiledKernel {
    /// Evaluates on already-projected points.
    #[inline]
    pub(crate) fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            CompiledKernel::Sobolev(terms) => a
                .iter()
                .zip(b)
                .map(|(&s, &t)| terms.univariate(s, t))
                .product(),
            CompiledKernel::Matern15 { ls } => {
                let u = SQRT_3 * sq_dist(a, b).sqrt() / ls;
                (1.0 + u) * (-u).exp()
            }
            CompiledKernel::Matern25 { ls } => {
                let u = SQRT_5 * sq_dist(a, b).sqrt() / ls;
                (1.0 + u + u * u / 3.0) * (-u).exp()
            }
            CompiledKernel::Rbf { ls } => (-sq_dist(a, b) / (2.0 * ls * ls)).exp(),
        }
    }

    fn is_sobolev(&self) -> bool {
        matches!(self, CompiledKernel::Sobolev(_))
    }
}

/// Rows of a covariate matrix restricted to the active coordinates, stored
/// row-major for cache-friendly kernel evaluation.
#[derive(Clone, Debug)]
pub(crate) struct Projected {
    pub dim: usize,
    pub data: Vec<f64>,
}

impl Projected {
    pub fn rows(&self) -> usize {
        if self.dim == 0 {
            0
        } else {
            self.data.len() / self.dim
        }
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }
}

fn project_rows(
    active: &ActiveCoords,
    sobolev: bool,
    x: &DMatrix<f64>,
    rows: impl Iterator<Item = usize>,
) -> Result<Projected> {
    let idx = active.indices(x.ncols())?;
    let mut data = Vec::new();
    for i in rows {
        for &j in &idx {
            let v = x[(i, j)];
            if !v.is_finite() {
                return Err(Error::NonFinite("covariates"));
            }
            if sobolev && !(0.0..=1.0).contains(&v) {
                return Err(Error::OutOfDomain { value: v });
            }
            data.push(v);
        }
    }
    Ok(Projected { dim: idx.len(), data })
}

pub(crate) struct Prepared {
    pub kernel: CompiledKernel,
    pub points: Projected,
}

/// Compiles `spec` and projects the selected rows of `x`.
pub(crate) fn prepare(
    spec: &KernelSpec,
    x: &DMatrix<f64>,
    rows: impl Iterator<Item = usize>,
) -> Result<Prepared> {
    let kernel = spec.compile()?;
    let points = project_rows(&spec.active_coords, kernel.is_sobolev(), x, rows)?;
    Ok(Prepared { kernel, points })
}

pub(crate) fn project_like(spec: &KernelSpec, kernel: &CompiledKernel, x: &DMatrix<f64>) -> Result<Projected> {
    project_rows(&spec.active_coords, kernel.is_sobolev(), x, 0..x.nrows())
}

/// `k(x~, y~)` where `x~`, `y~` are the restrictions of `x`, `y` to the
/// active coordinates.
pub fn kernel_eval(spec: &KernelSpec, x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: y.len(),
        });
    }
    let kernel = spec.compile()?;
    let idx = spec.active_coords.indices(x.len())?;
    let mut a = Vec::with_capacity(idx.len());
    let mut b = Vec::with_capacity(idx.len());
    for &j in &idx {
        for (v, out) in [(x[j], &mut a), (y[j], &mut b)] {
            if !v.is_finite() {
                return Err(Error::NonFinite("kernel input"));
            }
            if kernel.is_sobolev() && !(0.0..=1.0).contains(&v) {
                return Err(Error::OutOfDomain { value: v });
            }
            out.push(v);
        }
    }
    Ok(kernel.eval(&a, &b))
}

pub(crate) fn gram_projected(kernel: &CompiledKernel, p: &Projected) -> DMatrix<f64> {
    let n = p.rows();
    let upper: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let xi = p.row(i);
            (i..n).map(|j| kernel.eval(xi, p.row(j))).collect()
        })
        .collect();
    let mut g = DMatrix::zeros(n, n);
    for (i, row) in upper.iter().enumerate() {
        for (off, &v) in row.iter().enumerate() {
            let j = i + off;
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
    }
    g
}

/// `q x m` matrix of `k(query_j, train_i)`.
pub(crate) fn cross_projected(kernel: &CompiledKernel, query: &Projected, train: &Projected) -> DMatrix<f64> {
    let (q, m) = (query.rows(), train.rows());
    let rows: Vec<Vec<f64>> = (0..q)
        .into_par_iter()
        .map(|j| {
            let xj = query.row(j);
            (0..m).map(|i| kernel.eval(xj, train.row(i))).collect()
        })
        .collect();
    DMatrix::from_fn(q, m, |j, i| rows[j][i])
}

/// Symmetric Gram matrix `G[i][j] = k(X_i, X_j)`; each unordered pair is
/// evaluated once.
pub fn gram_matrix(spec: &KernelSpec, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if x.nrows() == 0 {
        return Err(Error::invalid("X", "no rows"));
    }
    let prep = prepare(spec, x, 0..x.nrows())?;
    Ok(gram_projected(&prep.kernel, &prep.points))
}

/// Cross-kernel matrix between query rows and training rows.
pub fn cross_gram(spec: &KernelSpec, query: &DMatrix<f64>, train: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if query.ncols() != train.ncols() {
        return Err(Error::DimensionMismatch {
            expected: train.ncols(),
            got: query.ncols(),
        });
    }
    let prep = prepare(spec, train, 0..train.nrows())?;
    let q = project_like(spec, &prep.kernel, query)?;
    Ok(cross_projected(&prep.kernel, &q, &prep.points))
}

// ---------------------------------------------------------------------------
// Median heuristic
// ---------------------------------------------------------------------------

/// Median of all `n(n-1)/2` pairwise Euclidean distances on the active
/// coordinates.
pub fn median_pairwise_distance(x: &DMatrix<f64>, active: &ActiveCoords) -> Result<f64> {
    let n = x.nrows();
    if n < 2 {
        return Err(Error::invalid("X", "median heuristic needs at least two rows"));
    }
    let p = project_rows(active, false, x, 0..n)?;
    let mut d = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            d.push(sq_dist(p.row(i), p.row(j)).sqrt());
        }
    }
    let len = d.len();
    let mid = len / 2;
    let (_, &mut hi, _) = d.select_nth_unstable_by(mid, f64::total_cmp);
    let med = if len % 2 == 1 {
        hi
    } else {
        let lo = d[..mid].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lo + hi)
    };
    if med <= 0.0 {
        return Err(Error::DegenerateSample(
            "median pairwise distance is zero".to_string(),
        ));
    }
    Ok(med)
}

/// Length scale `l` with `k(r_med; l) = 0.5`.
pub fn length_scale_for_median(family: KernelFamily, nu: f64, r_med: f64) -> Result<f64> {
    if !(r_med > 0.0 && r_med.is_finite()) {
        return Err(Error::invalid("r_med", format!("must be positive, got {r_med}")));
    }
    match family {
        KernelFamily::Sobolev => Err(Error::invalid(
            "family",
            "the Sobolev kernel has no length scale",
        )),
        KernelFamily::Rbf => Ok(r_med / (2.0 * std::f64::consts::LN_2).sqrt()),
        KernelFamily::Matern => {
            if nu != 1.5 && nu != 2.5 {
                return Err(Error::invalid("order_or_nu", format!("Matérn nu must be 1.5 or 2.5, got {nu}")));
            }
            // k(r_med; l) increases monotonically in l.
            let value = |l: f64| matern_profile(nu, r_med / l);
            let (mut lo, mut hi) = (1e-12 * r_med, 1e6 * r_med);
            let mut mid = 0.5 * (lo + hi);
            for _ in 0..500 {
                mid = 0.5 * (lo + hi);
                let v = value(mid);
                if (v - 0.5).abs() <= 1e-12 {
                    break;
                }
                if v < 0.5 {
                    lo = mid;
                } else {
                    hi = mid;
                }
                if hi - lo <= f64::EPSILON * hi {
                    break;
                }
            }
            Ok(mid)
        }
    }
}

pub fn median_heuristic_length_scale(
    family: KernelFamily,
    nu: f64,
    x: &DMatrix<f64>,
    active: &ActiveCoords,
) -> Result<f64> {
    let r_med = median_pairwise_distance(x, active)?;
    length_scale_for_median(family, nu, r_med)
}
