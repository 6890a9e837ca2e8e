//! Close-end sequential monitoring.
//!
//! A [`Calibration`] holds everything that does not depend on the stream
//! being watched (quantile grid, covariance kernel, weight matrix and the
//! threshold table). A [`MonitorPlan`] freezes one `(gamma, alpha)` choice
//! together with the baseline ECDF of a particular training block, and a
//! [`MonitorState`] consumes observations `m + 1, m + 2, ...` one at a time
//! until the first alarm or the horizon `floor((N + 1) m)`.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::stat::{self, CovKernel, QuantileGrid};
use crate::threshold::{self, ThresholdRequest, ThresholdTable};

/// How the weight matrix `A` is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AChoice {
    /// `(1 / d) I`.
    ScaledIdentity,
    /// `Gamma^{-1}`, with a small ridge when `Gamma` is singular.
    InverseGamma,
}

impl AChoice {
    pub fn build(self, kernel: &CovKernel) -> Result<DMatrix<f64>> {
        let d = kernel.dim();
        match self {
            AChoice::ScaledIdentity => Ok(DMatrix::identity(d, d) / d as f64),
            AChoice::InverseGamma => linalg::psd_inverse(&kernel.gamma, 1e-8),
        }
    }
}

/// Where the grid and the covariance kernel are estimated from.
#[derive(Debug, Clone, PartialEq)]
pub enum Reference {
    /// The training block itself.
    Training,
    /// A separate, typically long, sample from the no-change process.
    Auxiliary(Vec<f64>),
}

/// Settings shared by every plan derived from one calibration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorConfig {
    pub n_ratio: f64,
    pub d: usize,
    pub gammas: Vec<f64>,
    pub alphas: Vec<f64>,
    pub delta: f64,
    pub t_star: usize,
    pub a_choice: AChoice,
    pub m_sim: usize,
    pub reps: usize,
    pub seed: u64,
}

/// Stream-independent calibration artefacts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub n_ratio: f64,
    pub delta: f64,
    pub grid: QuantileGrid,
    pub kernel: CovKernel,
    #[serde(with = "linalg::rows")]
    pub a_matrix: DMatrix<f64>,
    pub thresholds: ThresholdTable,
}

impl Calibration {
    /// Simulates thresholds for a given grid and kernel.
    pub fn new(grid: QuantileGrid, kernel: CovKernel, cfg: &MonitorConfig) -> Result<Self> {
        if grid.dim() != kernel.dim() {
            return Err(Error::InvalidParameter(format!(
                "grid has {} points but kernel is {}x{}",
                grid.dim(),
                kernel.dim(),
                kernel.dim()
            )));
        }
        let a_matrix = cfg.a_choice.build(&kernel)?;
        let req = ThresholdRequest {
            kernel: kernel.clone(),
            n_ratio: cfg.n_ratio,
            gammas: cfg.gammas.clone(),
            alphas: cfg.alphas.clone(),
            delta: cfg.delta,
            a_matrix: a_matrix.clone(),
            m_sim: cfg.m_sim,
            reps: cfg.reps,
            seed: cfg.seed,
        };
        let thresholds = threshold::threshold_table(&req)?;
        Ok(Self { n_ratio: cfg.n_ratio, delta: cfg.delta, grid, kernel, a_matrix, thresholds })
    }

    /// Plan for one `(gamma, alpha)` cell with the baseline ECDF of
    /// `training` (its length is `m`).
    pub fn plan(&self, training: &[f64], gamma: f64, alpha: f64) -> Result<MonitorPlan> {
        let threshold = self.thresholds.threshold(gamma, alpha).ok_or_else(|| {
            Error::InvalidParameter(format!("no threshold calibrated for gamma = {gamma}, alpha = {alpha}"))
        })?;
        MonitorPlan::new(training, self.n_ratio, gamma, self.delta, alpha, &self.grid, &self.kernel, &self.a_matrix, threshold)
    }
}

/// Builds the grid and kernel from `reference` and simulates thresholds.
///
/// With [`Reference::Training`] both come from `training`; with an
/// auxiliary sample both come from that sample.
pub fn calibrate(training: &[f64], cfg: &MonitorConfig, reference: &Reference) -> Result<Calibration> {
    if training.len() < 50 {
        log::warn!("training block of {} observations is short for calibration", training.len());
    }
    let source = match reference {
        Reference::Training => training,
        Reference::Auxiliary(sample) => sample.as_slice(),
    };
    let grid = stat::make_quantile_grid(source, cfg.d)?;
    let kernel = stat::estimate_gamma(source, &grid, cfg.t_star)?;
    Calibration::new(grid, kernel, cfg)
}

/// Frozen monitoring rule for one stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorPlan {
    pub m: usize,
    pub n_ratio: f64,
    pub gamma: f64,
    pub delta: f64,
    pub alpha: f64,
    pub grid: QuantileGrid,
    pub kernel: CovKernel,
    #[serde(with = "linalg::rows")]
    pub a_matrix: DMatrix<f64>,
    pub threshold: f64,
    /// `F_{1:m}(x_i)` of the training block.
    pub baseline_ecdf: Vec<f64>,
}

impl MonitorPlan {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        training: &[f64],
        n_ratio: f64,
        gamma: f64,
        delta: f64,
        alpha: f64,
        grid: &QuantileGrid,
        kernel: &CovKernel,
        a_matrix: &DMatrix<f64>,
        threshold: f64,
    ) -> Result<Self> {
        let plan = Self {
            m: training.len(),
            n_ratio,
            gamma,
            delta,
            alpha,
            grid: grid.clone(),
            kernel: kernel.clone(),
            a_matrix: a_matrix.clone(),
            threshold,
            baseline_ecdf: grid.ecdf_values(training),
        };
        plan.validate()?;
        Ok(plan)
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(Error::InvalidParameter("training block is empty".into()));
        }
        if !(self.n_ratio > 0.0 && self.n_ratio.is_finite()) {
            return Err(Error::InvalidParameter(format!("N must be positive, got {}", self.n_ratio)));
        }
        if !(0.0..0.5).contains(&self.gamma) {
            return Err(Error::InvalidParameter(format!("gamma {} outside [0, 0.5)", self.gamma)));
        }
        if !(self.delta > 0.0) {
            return Err(Error::InvalidParameter("delta must be positive".into()));
        }
        if !(self.threshold > 0.0) {
            return Err(Error::InvalidParameter(format!("threshold must be positive, got {}", self.threshold)));
        }
        self.grid.validate()?;
        let d = self.grid.dim();
        if self.baseline_ecdf.len() != d || self.kernel.dim() != d {
            return Err(Error::InvalidParameter("plan components have inconsistent dimensions".into()));
        }
        if self.baseline_ecdf.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidParameter("baseline ECDF must be nondecreasing".into()));
        }
        stat::check_spd(&self.a_matrix, d)
    }

    /// Last index of the close-end procedure, `floor((N + 1) m)`.
    pub fn horizon_end(&self) -> usize {
        stat::horizon_end(self.m, self.n_ratio)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let plan: Self = serde_json::from_str(s)?;
        plan.validate()?;
        Ok(plan)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "status", content = "k")]
pub enum Status {
    Running,
    Alarmed(usize),
    Completed,
}

/// Outcome of one [`MonitorState::step`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Continue,
    Alarm,
    HorizonEnd,
}

/// Running state of one monitored stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorState {
    /// Index of the last consumed observation (1-based; starts at `m`).
    pub k: usize,
    /// `sum_{t = m+1..=k} 1(X_t <= x_i)`.
    pub counts: Vec<usize>,
    pub trajectory: Vec<(usize, f64)>,
    pub status: Status,
}

impl MonitorState {
    pub fn new(plan: &MonitorPlan) -> Self {
        Self { k: plan.m, counts: vec![0; plan.grid.dim()], trajectory: Vec::new(), status: Status::Running }
    }

    /// Consumes observation `k + 1`.
    pub fn step(&mut self, plan: &MonitorPlan, x_new: f64) -> Result<Decision> {
        if self.status != Status::Running {
            return Err(Error::MonitorState(format!("monitor already terminated ({:?})", self.status)));
        }
        if !(0.0..=1.0).contains(&x_new) {
            return Err(Error::Domain(format!("observation {x_new} outside [0, 1]")));
        }
        let horizon = plan.horizon_end();
        if self.k >= horizon {
            return Err(Error::MonitorState("horizon already reached".into()));
        }
        self.k += 1;
        let b = plan.grid.bucket(x_new);
        for c in self.counts.iter_mut().skip(b) {
            *c += 1;
        }
        let dm: Vec<f64> = self
            .counts
            .iter()
            .zip(&plan.baseline_ecdf)
            .map(|(c, f)| stat::detector_component(*c, *f, plan.m, self.k))
            .collect();
        let s = self.k as f64 / plan.m as f64;
        let quad = stat::weighted_quad(&dm, s, plan.gamma, plan.delta, &plan.a_matrix);
        self.trajectory.push((self.k, quad));
        if quad >= plan.threshold {
            self.status = Status::Alarmed(self.k);
            Ok(Decision::Alarm)
        } else if self.k == horizon {
            self.status = Status::Completed;
            Ok(Decision::HorizonEnd)
        } else {
            Ok(Decision::Continue)
        }
    }

    pub fn alarm_index(&self) -> Option<usize> {
        match self.status {
            Status::Alarmed(k) => Some(k),
            _ => None,
        }
    }
}

/// Result of monitoring a whole stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub alarm_index: Option<usize>,
    pub horizon_end_index: usize,
    pub gamma: f64,
    pub alpha: f64,
    pub threshold: f64,
    pub trajectory: Vec<(usize, f64)>,
    /// The stream ended before the horizon without an alarm.
    pub truncated: bool,
    /// `alarm_index - true_change` when the true change index is known.
    pub delay: Option<i64>,
}

impl DetectionReport {
    /// `k,s,quad` rows for plotting.
    pub fn trajectory_csv(&self, m: usize) -> String {
        let mut out = String::from("k,s,quad\n");
        for (k, q) in &self.trajectory {
            let _ = writeln!(out, "{k},{},{q}", *k as f64 / m as f64);
        }
        out
    }
}

/// Feeds `stream` (observations `m + 1, m + 2, ...`) until the first alarm
/// or the horizon. `true_change` is the 1-based index of the true change
/// point, if known.
pub fn run_to_completion(plan: &MonitorPlan, stream: &[f64], true_change: Option<usize>) -> Result<DetectionReport> {
    plan.validate()?;
    let mut state = MonitorState::new(plan);
    for x in stream {
        match state.step(plan, *x)? {
            Decision::Continue => {}
            Decision::Alarm | Decision::HorizonEnd => break,
        }
    }
    let alarm_index = state.alarm_index();
    Ok(DetectionReport {
        alarm_index,
        horizon_end_index: plan.horizon_end(),
        gamma: plan.gamma,
        alpha: plan.alpha,
        threshold: plan.threshold,
        truncated: state.status == Status::Running,
        delay: alarm_index.zip(true_change).map(|(a, t)| a as i64 - t as i64),
        trajectory: state.trajectory,
    })
}

/// Parses streaming records `index,value`, one per line. A header line and
/// blank lines are skipped; indices must increase by one.
pub fn parse_stream(text: &str) -> Result<Vec<(usize, f64)>> {
    let mut out: Vec<(usize, f64)> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split(',').map(str::trim);
        let (Some(a), Some(b), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(Error::Schema { row: lineno + 1, message: "expected `index,value`".into() });
        };
        let index = match a.parse::<usize>() {
            Ok(i) => i,
            Err(_) if out.is_empty() && b.parse::<f64>().is_err() => continue,
            Err(_) => return Err(Error::Schema { row: lineno + 1, message: format!("bad index `{a}`") }),
        };
        let value: f64 = b
            .parse()
            .map_err(|_| Error::Schema { row: lineno + 1, message: format!("bad value `{b}`") })?;
        if !(0.0..=1.0).contains(&value) {
            return Err(Error::Schema { row: lineno + 1, message: format!("value {value} outside [0, 1]") });
        }
        if let Some((prev, _)) = out.last() {
            if index != prev + 1 {
                return Err(Error::Schema {
                    row: lineno + 1,
                    message: format!("index {index} does not follow {prev}"),
                });
            }
        }
        out.push((index, value));
    }
    Ok(out)
}

/// Runs `plan` over parsed `index,value` records, which must start at
/// observation `m + 1`.
pub fn monitor_records(plan: &MonitorPlan, records: &[(usize, f64)], true_change: Option<usize>) -> Result<DetectionReport> {
    if let Some((first, _)) = records.first() {
        if *first != plan.m + 1 {
            return Err(Error::Schema {
                row: 1,
                message: format!("stream starts at index {first}, expected {}", plan.m + 1),
            });
        }
    }
    let values: Vec<f64> = records.iter().map(|(_, v)| *v).collect();
    run_to_completion(plan, &values, true_change)
}
