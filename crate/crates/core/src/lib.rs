//! Kernel ridge regression estimators of conditional average treatment
//! effects (CATE).
//!
//! The central estimator regresses switch-imputed pseudo-outcomes, built
//! from lightly regularized per-arm nuisance fits, on a second kernel. That
//! kernel may be smoother than the nuisance kernel or restricted to a subset
//! of coordinates. A three-way-split selection step picks the stage-2 kernel
//! and regularizer from a candidate library.
//!
//! Modules:
//!
//! * [`kernels`]: Sobolev, Matérn and RBF kernels, Gram matrices, median heuristic
//! * [`krr`]: exact kernel ridge regression
//! * [`cate`]: the two-stage learner
//! * [`selection`]: split, truncate, proxy, select
//! * [`baselines`]: plug-in and DR-learner with k-fold CV
//! * [`dgp`]: synthetic scenarios with known CATE
//! * [`harness`]: replications, reports, rate sweeps, CSV ingestion, cross-fitting
//! * [`config`]: JSON experiment configuration

pub mod baselines;
pub mod cate;
pub mod config;
pub mod dgp;
pub mod error;
pub mod harness;
pub mod kernels;
pub mod krr;
pub mod seeds;
pub mod selection;

pub use cate::{fit_cate, fit_nuisances, predict_cate, switch_impute, CateEstimator, CatePredictor, Dataset};
pub use error::{Error, Result};
pub use kernels::{gram_matrix, kernel_eval, median_heuristic_length_scale, ActiveCoords, KernelFamily, KernelSpec, LengthScale};
pub use krr::{fit_masked, FittedKrr};
pub use selection::{select, CandidateConfig, SelectionResult};

pub use nalgebra::{DMatrix, DVector};
