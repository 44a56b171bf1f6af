//! Experiment orchestration: replications, reports, rate sweeps, spectral
//! diagnostics, CSV ingestion and cross-fitted selection.

pub mod crossfit;
pub mod diagnostics;
pub mod experiment;
pub mod ingest;
pub mod rates;
pub mod report;

pub use crossfit::{cross_fit_average, CrossFitPipeline, CrossFitPredictor};
pub use diagnostics::{effective_dimension, leverage_scores};
pub use experiment::{fit_method, mse, run_experiment, ExperimentReport, MethodSettings, RepRecord};
pub use ingest::{ingest_csv, Ingested, Rescaling};
pub use rates::{rate_sweep, RateSweep};
pub use report::{markdown_table, write_report_csv};
