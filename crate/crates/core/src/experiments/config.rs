//! TOML experiment configuration.
//!
//! The monitoring section has no defaults for `m`, `n_ratio`, `gammas` or
//! `alphas`; they must always be written out.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ExogOrder, ExogenousSpec, GBetaArModel, DEFAULT_BURN_IN};
use crate::monitor::AChoice;
use crate::stat::{DEFAULT_DELTA, DEFAULT_T_STAR};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    NullSize,
    Power,
    ThresholdTable,
    FitSweep,
    MonitorRun,
}

impl std::str::FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().replace('-', "_").as_str() {
            "null_size" => Ok(Self::NullSize),
            "power" => Ok(Self::Power),
            "threshold_table" => Ok(Self::ThresholdTable),
            "fit_sweep" => Ok(Self::FitSweep),
            "monitor_run" => Ok(Self::MonitorRun),
            other => Err(Error::Config(format!("unknown experiment kind '{other}'"))),
        }
    }
}

impl std::fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::NullSize => "null_size",
            Self::Power => "power",
            Self::ThresholdTable => "threshold_table",
            Self::FitSweep => "fit_sweep",
            Self::MonitorRun => "monitor_run",
        })
    }
}

/// Exogenous dynamics after the change.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PostChange {
    /// 1-based index of the last pre-change observation; the new exogenous
    /// dynamics drive observations `change_index + 1, ...`.
    pub change_index: usize,
    pub exogenous: ExogenousSpec,
}

/// Where the quantile grid and covariance kernel come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum ReferenceSpec {
    /// A long no-change simulation of the configured model.
    Simulated { length: usize },
    /// The training block of the monitored series.
    Training,
}

fn default_delta() -> f64 {
    DEFAULT_DELTA
}
fn default_t_star() -> usize {
    DEFAULT_T_STAR
}
fn default_a() -> AChoice {
    AChoice::ScaledIdentity
}
fn default_m_sim() -> usize {
    1000
}
fn default_threshold_reps() -> usize {
    10_000
}
fn default_reference() -> ReferenceSpec {
    ReferenceSpec::Simulated { length: 10_000 }
}
fn default_burn_in() -> usize {
    DEFAULT_BURN_IN
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonitoringSection {
    /// Training sizes. Ignored by kinds that take `m` from the data.
    #[serde(default)]
    pub m: Vec<usize>,
    pub n_ratio: f64,
    pub d: usize,
    pub gammas: Vec<f64>,
    pub alphas: Vec<f64>,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_t_star")]
    pub t_star: usize,
    #[serde(default = "default_a")]
    pub a_matrix: AChoice,
    #[serde(default = "default_m_sim")]
    pub m_sim: usize,
    #[serde(default = "default_threshold_reps")]
    pub threshold_reps: usize,
    #[serde(default = "default_reference")]
    pub reference: ReferenceSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub p: Vec<usize>,
    pub q: Vec<ExogOrder>,
    /// Length of each simulated series (simulation sweeps only).
    #[serde(default)]
    pub length: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineSection {
    /// CSV with `date` (YYYY-MM), `value` and optional exogenous columns.
    /// Relative paths resolve against the config file's directory.
    pub input: PathBuf,
    /// Last month (inclusive) of the training window, `YYYY-MM`.
    pub training_end: String,
    /// Exogenous column to use when the CSV has more than one.
    #[serde(default)]
    pub exog_column: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    #[serde(default)]
    pub replications: Option<usize>,
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
    #[serde(default)]
    pub model: Option<GBetaArModel>,
    #[serde(default)]
    pub exogenous: Option<ExogenousSpec>,
    #[serde(default)]
    pub post_change: Option<PostChange>,
    #[serde(default)]
    pub monitoring: Option<MonitoringSection>,
    #[serde(default)]
    pub sweep: Option<SweepSection>,
    #[serde(default)]
    pub pipeline: Option<PipelineSection>,
}

fn missing(section: &str, kind: ExperimentKind) -> Error {
    Error::Config(format!("[{section}] is required for kind = \"{kind}\""))
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads a config file; a relative pipeline input is resolved against
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml_str(&text)?;
        if let (Some(p), Some(dir)) = (cfg.pipeline.as_mut(), path.parent()) {
            if p.input.is_relative() {
                p.input = dir.join(&p.input);
            }
        }
        Ok(cfg)
    }

    /// Caps replication counts at the fast profile (500 data replications,
    /// 1000 threshold replications).
    pub fn apply_fast_profile(&mut self) {
        if let Some(r) = self.replications.as_mut() {
            *r = (*r).min(500);
        }
        if let Some(m) = self.monitoring.as_mut() {
            m.threshold_reps = m.threshold_reps.min(1000);
        }
    }

    pub fn replications(&self) -> Result<usize> {
        match self.replications {
            Some(r) if r > 0 => Ok(r),
            Some(_) => Err(Error::Config("replications must be positive".into())),
            None => Err(Error::Config(format!("replications is required for kind = \"{}\"", self.kind))),
        }
    }

    pub fn model(&self) -> Result<&GBetaArModel> {
        self.model.as_ref().ok_or_else(|| missing("model", self.kind))
    }

    pub fn exogenous(&self) -> Result<&ExogenousSpec> {
        self.exogenous.as_ref().ok_or_else(|| missing("exogenous", self.kind))
    }

    pub fn monitoring(&self) -> Result<&MonitoringSection> {
        self.monitoring.as_ref().ok_or_else(|| missing("monitoring", self.kind))
    }

    pub fn sweep(&self) -> Result<&SweepSection> {
        self.sweep.as_ref().ok_or_else(|| missing("sweep", self.kind))
    }

    pub fn pipeline(&self) -> Result<&PipelineSection> {
        self.pipeline.as_ref().ok_or_else(|| missing("pipeline", self.kind))
    }

    pub fn validate(&self) -> Result<()> {
        let cfg_err = |e: Error| match e {
            Error::Config(_) => e,
            other => Error::Config(other.to_string()),
        };
        if let Some(model) = &self.model {
            model.validate().map_err(cfg_err)?;
        }
        if let Some(exog) = &self.exogenous {
            exog.validate().map_err(cfg_err)?;
        }
        if let Some(mon) = &self.monitoring {
            validate_monitoring(mon)?;
        }
        match self.kind {
            ExperimentKind::NullSize | ExperimentKind::Power => {
                self.replications()?;
                self.model()?;
                self.exogenous()?;
                let mon = self.monitoring()?;
                if mon.m.is_empty() {
                    return Err(Error::Config("monitoring.m must list at least one training size".into()));
                }
                if mon.reference == ReferenceSpec::Training {
                    return Err(Error::Config(
                        "simulation studies share one calibration; use reference.source = \"simulated\"".into(),
                    ));
                }
                if self.kind == ExperimentKind::Power {
                    let post = self.post_change.as_ref().ok_or_else(|| missing("post_change", self.kind))?;
                    post.exogenous.validate().map_err(cfg_err)?;
                    for m in &mon.m {
                        let s = post.change_index as f64 / *m as f64;
                        if !(s >= 1.0 && s < mon.n_ratio + 1.0) {
                            return Err(Error::Config(format!(
                                "change_index {} must lie in [m, (N + 1) m) for m = {m}",
                                post.change_index
                            )));
                        }
                    }
                }
            }
            ExperimentKind::ThresholdTable => {
                self.model()?;
                self.exogenous()?;
                if self.monitoring()?.reference == ReferenceSpec::Training {
                    return Err(Error::Config("threshold tables need a simulated reference".into()));
                }
            }
            ExperimentKind::FitSweep => {
                self.replications()?;
                self.model()?;
                self.exogenous()?;
                let sweep = self.sweep()?;
                validate_sweep(sweep)?;
                if sweep.length.unwrap_or(0) == 0 {
                    return Err(Error::Config("sweep.length is required for simulated sweeps".into()));
                }
            }
            ExperimentKind::MonitorRun => {
                validate_sweep(self.sweep()?)?;
                self.monitoring()?;
                let p = self.pipeline()?;
                super::pipeline::YearMonth::parse(&p.training_end).map_err(cfg_err)?;
            }
        }
        Ok(())
    }
}

fn validate_monitoring(mon: &MonitoringSection) -> Result<()> {
    let bad = |msg: String| Err(Error::Config(msg));
    if !(mon.n_ratio > 0.0 && mon.n_ratio.is_finite()) {
        return bad(format!("monitoring.n_ratio must be positive, got {}", mon.n_ratio));
    }
    if mon.d == 0 {
        return bad("monitoring.d must be positive".into());
    }
    if mon.gammas.is_empty() || mon.gammas.iter().any(|g| !(0.0..0.5).contains(g)) {
        return bad("monitoring.gammas must be non-empty with values in [0, 0.5)".into());
    }
    if mon.alphas.is_empty() || mon.alphas.iter().any(|a| !(*a > 0.0 && *a < 1.0)) {
        return bad("monitoring.alphas must be non-empty with values in (0, 1)".into());
    }
    if !(mon.delta > 0.0) {
        return bad("monitoring.delta must be positive".into());
    }
    if mon.t_star == 0 {
        return bad("monitoring.t_star must be positive".into());
    }
    if mon.m_sim < 100 {
        return bad(format!("monitoring.m_sim must be at least 100, got {}", mon.m_sim));
    }
    if mon.threshold_reps == 0 {
        return bad("monitoring.threshold_reps must be positive".into());
    }
    if mon.m.contains(&0) {
        return bad("monitoring.m values must be positive".into());
    }
    if let ReferenceSpec::Simulated { length } = mon.reference {
        if length < 20 * mon.t_star {
            return bad(format!("reference length {length} is below 20 * t_star = {}", 20 * mon.t_star));
        }
    }
    Ok(())
}

fn validate_sweep(sweep: &SweepSection) -> Result<()> {
    if sweep.p.is_empty() || sweep.q.is_empty() {
        return Err(Error::Config("sweep.p and sweep.q must be non-empty".into()));
    }
    Ok(())
}
