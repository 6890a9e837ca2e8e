//! Nonparametric sequential change-point detection for bounded time series
//! driven by generalized Beta autoregressive models with an exogenous input.
//!
//! The crate covers the whole chain:
//!
//! * [`model`]: the Beta AR(p) model with exogenous lags and its simulator,
//! * [`inference`]: conditional maximum likelihood, AIC/MAE model selection
//!   and trend/season adjustment,
//! * [`stat`]: empirical-CDF detectors, the weight function and the
//!   long-run covariance kernel,
//! * [`threshold`]: Monte-Carlo thresholds from the Gaussian limit,
//! * [`monitor`]: close-end sequential monitoring,
//! * [`experiments`]: simulation studies and the monthly-data workflow.

pub mod error;
pub mod experiments;
pub mod inference;
pub mod linalg;
pub mod model;
pub mod monitor;
pub mod rng;
pub mod stat;
pub mod threshold;

pub use error::{Error, Result};
pub use experiments::{ExperimentConfig, ExperimentKind, ExperimentReport};
pub use inference::{DetrendModel, FitOptions, FitResult, SweepTable};
pub use model::{Clamp, ExogOrder, ExogenousSpec, GBetaArModel, SeriesPair};
pub use monitor::{
    AChoice, Calibration, Decision, DetectionReport, MonitorConfig, MonitorPlan, MonitorState, Reference, Status,
};
pub use stat::{CovKernel, DetectorVector, QuantileGrid};
pub use threshold::{ThresholdEntry, ThresholdRequest, ThresholdTable};
