//! Experiment runners driven by TOML configs.
//!
//! Every report embeds the resolved config and the master seed so artefacts
//! are self-describing.

pub mod config;
pub mod io;
pub mod pipeline;
pub mod simulation;

use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::Result;

pub use config::{
    ExperimentConfig, ExperimentKind, MonitoringSection, PipelineSection, PostChange, ReferenceSpec, SweepSection,
};
pub use pipeline::{prepare_series, run_real_pipeline, MonthlySeries, PipelineReport, PreparedSeries, YearMonth};
pub use simulation::{
    config_calibration, monitor_config, replication_seed, run_fit_sweep, run_null_size, run_null_size_with, run_power, run_power_with,
    run_threshold_table, simulate_series, simulated_calibration, NullSizeReport, PowerReport, SweepReport, ThresholdReport,
};

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExperimentReport {
    NullSize(NullSizeReport),
    Power(PowerReport),
    ThresholdTable(ThresholdReport),
    FitSweep(SweepReport),
    MonitorRun(PipelineReport),
}

impl ExperimentReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// `(file name, contents)` of the tabular outputs.
    pub fn tables(&self) -> Vec<(&'static str, String)> {
        match self {
            Self::NullSize(r) => vec![("size.csv", r.to_csv()), ("thresholds.csv", r.thresholds.to_csv())],
            Self::Power(r) => vec![("power.csv", r.to_csv()), ("thresholds.csv", r.thresholds.to_csv())],
            Self::ThresholdTable(r) => vec![("thresholds.csv", r.table.to_csv())],
            Self::FitSweep(r) => {
                let mut t = vec![("selections.csv", r.to_csv())];
                if let Some(first) = &r.first {
                    t.push(("sweep.csv", first.to_csv()));
                }
                t
            }
            Self::MonitorRun(r) => {
                let mut t = vec![
                    ("sweep.csv", r.sweep.to_csv()),
                    ("thresholds.csv", r.thresholds.to_csv()),
                    ("detections.csv", r.detections_csv()),
                    ("fitted.csv", r.fitted_csv()),
                ];
                if let Some(first) = r.detections.first() {
                    t.push(("trajectory.csv", first.report.trajectory_csv(r.m)));
                }
                t
            }
        }
    }

    /// Writes `report.json` and the CSV tables into `dir`.
    pub fn write_artifacts(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        let path = dir.join("report.json");
        std::fs::write(&path, self.to_json()?)?;
        written.push(path);
        for (name, body) in self.tables() {
            let path = dir.join(name);
            std::fs::write(&path, body)?;
            written.push(path);
        }
        Ok(written)
    }
}

/// Runs the experiment described by `cfg`.
pub fn run_experiment(cfg: &ExperimentConfig, seed: u64) -> Result<ExperimentReport> {
    cfg.validate()?;
    Ok(match cfg.kind {
        ExperimentKind::NullSize => ExperimentReport::NullSize(run_null_size(cfg, seed)?),
        ExperimentKind::Power => ExperimentReport::Power(run_power(cfg, seed)?),
        ExperimentKind::ThresholdTable => ExperimentReport::ThresholdTable(run_threshold_table(cfg, seed)?),
        ExperimentKind::FitSweep => ExperimentReport::FitSweep(run_fit_sweep(cfg, seed)?),
        ExperimentKind::MonitorRun => {
            let series = MonthlySeries::from_path(&cfg.pipeline()?.input)?;
            ExperimentReport::MonitorRun(run_real_pipeline(cfg, &series, seed)?)
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;

    const NULL: &str = r#"
kind = "null_size"
replications = 40

[model]
phi0 = 0.5
phi = [0.1, 0.2, 0.2]
psi = [0.5]
tau = 100.0

[exogenous]
ar = [-0.1]
innovation_sd = 1.0

[monitoring]
m = [50]
n_ratio = 1.0
d = 5
gammas = [0.0, 0.25]
alphas = [0.1, 0.05]
m_sim = 100
threshold_reps = 200
reference = { source = "simulated", length = 2000 }
"#;

    #[test]
    fn config_round_trip() {
        let cfg = ExperimentConfig::from_toml_str(NULL).unwrap();
        let again = ExperimentConfig::from_toml_str(&cfg.to_toml_string().unwrap()).unwrap();
        assert_eq!(cfg, again);
        assert_eq!(cfg.monitoring.as_ref().unwrap().t_star, 50);
    }

    #[test]
    fn required_fields_have_no_defaults() {
        for key in ["n_ratio = 1.0\n", "gammas = [0.0, 0.25]\n", "alphas = [0.1, 0.05]\n"] {
            let text = NULL.replace(key, "");
            assert!(matches!(ExperimentConfig::from_toml_str(&text), Err(Error::Config(_))), "{key}");
        }
        let no_m = NULL.replace("m = [50]\n", "");
        assert!(ExperimentConfig::from_toml_str(&no_m).is_err());
        let unknown = NULL.replace("d = 5", "d = 5\nbogus = 1");
        assert!(ExperimentConfig::from_toml_str(&unknown).is_err());
        let power = NULL.replace("null_size", "power");
        assert!(ExperimentConfig::from_toml_str(&power).is_err());
    }

    #[test]
    fn null_size_is_seeded_and_unreachable_threshold_never_rejects() {
        let cfg = ExperimentConfig::from_toml_str(NULL).unwrap();
        let a = run_null_size(&cfg, 3).unwrap();
        let b = run_null_size(&cfg, 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.rows.len(), 4);
        let mut cal = simulated_calibration(&cfg, 3).unwrap();
        for e in cal.thresholds.entries.iter_mut() {
            e.c = f64::INFINITY;
        }
        let never = run_null_size_with(&cfg, &cal, 3).unwrap();
        assert!(never.rows.iter().all(|r| r.rate == 0.0 && r.replications == 40));
    }
}
