//! Monte-Carlo studies on simulated data: size under no change, power and
//! detection delay under an exogenous regime switch, threshold tables and
//! model-selection frequencies.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, ReferenceSpec};
use crate::error::{Error, Result};
use crate::inference::{self, FitOptions, SweepTable};
use crate::model::{simulate_process, simulate_process_regimes, ExogOrder, Regime, SeriesPair};
use crate::monitor::{self, run_to_completion, Calibration, MonitorConfig, Reference};
use crate::rng::{derive_seed, stream};
use crate::stat::{self, CovKernel, QuantileGrid};
use crate::threshold::ThresholdTable;

/// Seed of data replication `rep` within block `block` (e.g. one `m`).
pub fn replication_seed(seed: u64, block: u64, rep: u64) -> u64 {
    derive_seed(derive_seed(derive_seed(seed, stream::DATA), block), rep)
}

/// Grid, kernel and thresholds from a long no-change simulation of the
/// configured model.
pub fn simulated_calibration(cfg: &ExperimentConfig, seed: u64) -> Result<Calibration> {
    let mon = cfg.monitoring()?;
    let ReferenceSpec::Simulated { length } = mon.reference else {
        return Err(Error::Config("a simulated reference is required".into()));
    };
    let reference = simulate_process(
        cfg.model()?,
        cfg.exogenous()?,
        length,
        cfg.burn_in,
        derive_seed(seed, stream::REFERENCE),
    )?;
    let grid = stat::make_quantile_grid(&reference.x, mon.d)?;
    let kernel = stat::estimate_gamma(&reference.x, &grid, mon.t_star)?;
    Calibration::new(grid, kernel, &monitor_config(cfg, seed)?)
}

/// Monitoring settings of `cfg` with the threshold stream derived from `seed`.
pub fn monitor_config(cfg: &ExperimentConfig, seed: u64) -> Result<MonitorConfig> {
    let mon = cfg.monitoring()?;
    Ok(MonitorConfig {
        n_ratio: mon.n_ratio,
        d: mon.d,
        gammas: mon.gammas.clone(),
        alphas: mon.alphas.clone(),
        delta: mon.delta,
        t_star: mon.t_star,
        a_choice: mon.a_matrix,
        m_sim: mon.m_sim,
        reps: mon.threshold_reps,
        seed: derive_seed(seed, stream::THRESHOLD),
    })
}

/// Calibration for an external training block: a simulated reference when
/// the config asks for one, otherwise the block itself.
pub fn config_calibration(cfg: &ExperimentConfig, training: &[f64], seed: u64) -> Result<Calibration> {
    match cfg.monitoring()?.reference {
        ReferenceSpec::Simulated { .. } => simulated_calibration(cfg, seed),
        ReferenceSpec::Training => monitor::calibrate(training, &monitor_config(cfg, seed)?, &Reference::Training),
    }
}

/// One series of length `n` from the configured model. With a
/// `[post_change]` section the exogenous input switches regime after
/// `change_index`.
pub fn simulate_series(cfg: &ExperimentConfig, n: usize, seed: u64) -> Result<SeriesPair> {
    let model = cfg.model()?;
    let pre = cfg.exogenous()?;
    let seed = derive_seed(seed, stream::DATA);
    match &cfg.post_change {
        Some(post) => {
            let regimes = [Regime { start: 0, spec: pre }, Regime { start: post.change_index, spec: &post.exogenous }];
            simulate_process_regimes(model, &regimes, n, cfg.burn_in, seed)
        }
        None => simulate_process(model, pre, n, cfg.burn_in, seed),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeRow {
    pub m: usize,
    pub gamma: f64,
    pub alpha: f64,
    pub threshold: f64,
    pub rejections: usize,
    /// Successful replications.
    pub replications: usize,
    pub failures: usize,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NullSizeReport {
    pub config: ExperimentConfig,
    pub seed: u64,
    pub grid: QuantileGrid,
    pub kernel: CovKernel,
    pub thresholds: ThresholdTable,
    pub rows: Vec<SizeRow>,
}

impl NullSizeReport {
    pub fn rate(&self, m: usize, gamma: f64, alpha: f64) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.m == m && (r.gamma - gamma).abs() < 1e-12 && (r.alpha - alpha).abs() < 1e-12)
            .map(|r| r.rate)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("m,gamma,alpha,threshold,rate,rejections,replications,failures\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{}",
                r.m, r.gamma, r.alpha, r.threshold, r.rate, r.rejections, r.replications, r.failures
            );
        }
        s
    }
}

/// Sup statistics of no-change replications for one `m`, `[rep][gamma]`;
/// failed replications are `None`.
pub fn null_sup_statistics(
    cfg: &ExperimentConfig,
    cal: &Calibration,
    m: usize,
    seed: u64,
) -> Result<Vec<Option<Vec<f64>>>> {
    let mon = cfg.monitoring()?;
    let model = cfg.model()?;
    let exog = cfg.exogenous()?;
    let horizon = stat::horizon_end(m, mon.n_ratio);
    let reps = cfg.replications()?;
    Ok((0..reps)
        .into_par_iter()
        .map(|r| {
            let run = || -> Result<Vec<f64>> {
                let data = simulate_process(model, exog, horizon, cfg.burn_in, replication_seed(seed, m as u64, r as u64))?;
                stat::sup_statistic(&data.x, m, horizon, &cal.grid, &cal.a_matrix, &mon.gammas, mon.delta)
            };
            run().map_err(|e| log::warn!("replication {r} (m = {m}) failed: {e}")).ok()
        })
        .collect())
}

/// Empirical rejection rates under no change.
pub fn run_null_size(cfg: &ExperimentConfig, seed: u64) -> Result<NullSizeReport> {
    cfg.validate()?;
    let cal = simulated_calibration(cfg, seed)?;
    run_null_size_with(cfg, &cal, seed)
}

/// [`run_null_size`] with a precomputed calibration.
pub fn run_null_size_with(cfg: &ExperimentConfig, cal: &Calibration, seed: u64) -> Result<NullSizeReport> {
    let mon = cfg.monitoring()?;
    let mut rows = Vec::new();
    for &m in &mon.m {
        let sups = null_sup_statistics(cfg, cal, m, seed)?;
        let ok: Vec<&Vec<f64>> = sups.iter().flatten().collect();
        let failures = sups.len() - ok.len();
        for (gi, gamma) in mon.gammas.iter().enumerate() {
            for alpha in &mon.alphas {
                let c = cal.thresholds.threshold(*gamma, *alpha).expect("calibrated cell");
                let rejections = ok.iter().filter(|s| s[gi] >= c).count();
                rows.push(SizeRow {
                    m,
                    gamma: *gamma,
                    alpha: *alpha,
                    threshold: c,
                    rejections,
                    replications: ok.len(),
                    failures,
                    rate: rejections as f64 / ok.len().max(1) as f64,
                });
            }
        }
    }
    Ok(NullSizeReport {
        config: cfg.clone(),
        seed,
        grid: cal.grid.clone(),
        kernel: cal.kernel.clone(),
        thresholds: cal.thresholds.clone(),
        rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerRow {
    pub m: usize,
    pub gamma: f64,
    pub alpha: f64,
    pub threshold: f64,
    /// Replications that raised an alarm before the horizon.
    pub detections: usize,
    /// Alarms raised at or before the change index.
    pub early_alarms: usize,
    pub replications: usize,
    pub failures: usize,
    pub detection_rate: f64,
    /// Mean of `alarm_index - change_index` over detections.
    pub mean_delay: Option<f64>,
    pub delay_sd: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerReport {
    pub config: ExperimentConfig,
    pub seed: u64,
    pub grid: QuantileGrid,
    pub kernel: CovKernel,
    pub thresholds: ThresholdTable,
    pub rows: Vec<PowerRow>,
}

impl PowerReport {
    pub fn row(&self, m: usize, gamma: f64, alpha: f64) -> Option<&PowerRow> {
        self.rows
            .iter()
            .find(|r| r.m == m && (r.gamma - gamma).abs() < 1e-12 && (r.alpha - alpha).abs() < 1e-12)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "m,gamma,alpha,threshold,detection_rate,mean_delay,delay_sd,detections,early_alarms,replications,failures\n",
        );
        let opt = |v: Option<f64>| v.map_or(String::new(), |v| v.to_string());
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{},{}",
                r.m,
                r.gamma,
                r.alpha,
                r.threshold,
                r.detection_rate,
                opt(r.mean_delay),
                opt(r.delay_sd),
                r.detections,
                r.early_alarms,
                r.replications,
                r.failures
            );
        }
        s
    }
}

/// Detection rate and delay after an exogenous regime switch.
///
/// The grid, kernel and thresholds come from a no-change simulation of the
/// pre-change process and are shared by all replications; each replication
/// uses its own first `m` observations as the baseline.
pub fn run_power(cfg: &ExperimentConfig, seed: u64) -> Result<PowerReport> {
    cfg.validate()?;
    let cal = simulated_calibration(cfg, seed)?;
    run_power_with(cfg, &cal, seed)
}

/// [`run_power`] with a precomputed calibration.
pub fn run_power_with(cfg: &ExperimentConfig, cal: &Calibration, seed: u64) -> Result<PowerReport> {
    let mon = cfg.monitoring()?;
    let model = cfg.model()?;
    let pre = cfg.exogenous()?;
    let post = cfg
        .post_change
        .as_ref()
        .ok_or_else(|| Error::Config("[post_change] is required for kind = \"power\"".into()))?;
    let reps = cfg.replications()?;
    let cells: Vec<(f64, f64)> =
        mon.gammas.iter().flat_map(|g| mon.alphas.iter().map(move |a| (*g, *a))).collect();
    let mut rows = Vec::new();
    for &m in &mon.m {
        let horizon = stat::horizon_end(m, mon.n_ratio);
        let regimes = [Regime { start: 0, spec: pre }, Regime { start: post.change_index, spec: &post.exogenous }];
        // [rep][cell] alarm index.
        let alarms: Vec<Option<Vec<Option<usize>>>> = (0..reps)
            .into_par_iter()
            .map(|r| {
                let run = || -> Result<Vec<Option<usize>>> {
                    let rs = replication_seed(seed, m as u64, r as u64);
                    let data = simulate_process_regimes(model, &regimes, horizon, cfg.burn_in, rs)?;
                    cells
                        .iter()
                        .map(|(g, a)| {
                            let plan = cal.plan(&data.x[..m], *g, *a)?;
                            Ok(run_to_completion(&plan, &data.x[m..], Some(post.change_index))?.alarm_index)
                        })
                        .collect()
                };
                run().map_err(|e| log::warn!("replication {r} (m = {m}) failed: {e}")).ok()
            })
            .collect();
        let ok: Vec<&Vec<Option<usize>>> = alarms.iter().flatten().collect();
        let failures = alarms.len() - ok.len();
        for (ci, (gamma, alpha)) in cells.iter().enumerate() {
            let hits: Vec<usize> = ok.iter().filter_map(|a| a[ci]).collect();
            let delays: Vec<f64> = hits.iter().map(|k| *k as f64 - post.change_index as f64).collect();
            let n = delays.len() as f64;
            let mean = (!delays.is_empty()).then(|| delays.iter().sum::<f64>() / n);
            let sd = mean.filter(|_| delays.len() > 1).map(|mu| {
                (delays.iter().map(|d| (d - mu).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
            });
            rows.push(PowerRow {
                m,
                gamma: *gamma,
                alpha: *alpha,
                threshold: cal.thresholds.threshold(*gamma, *alpha).expect("calibrated cell"),
                detections: hits.len(),
                early_alarms: hits.iter().filter(|k| **k <= post.change_index).count(),
                replications: ok.len(),
                failures,
                detection_rate: hits.len() as f64 / ok.len().max(1) as f64,
                mean_delay: mean,
                delay_sd: sd,
            });
        }
    }
    Ok(PowerReport {
        config: cfg.clone(),
        seed,
        grid: cal.grid.clone(),
        kernel: cal.kernel.clone(),
        thresholds: cal.thresholds.clone(),
        rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdReport {
    pub config: ExperimentConfig,
    pub seed: u64,
    pub grid: QuantileGrid,
    pub kernel: CovKernel,
    pub table: ThresholdTable,
    /// `(alpha, gamma_lo, gamma_hi)` cells where `c` does not grow with gamma.
    pub gamma_order_violations: Vec<(f64, f64, f64)>,
}

/// Threshold table from a simulated reference.
pub fn run_threshold_table(cfg: &ExperimentConfig, seed: u64) -> Result<ThresholdReport> {
    cfg.validate()?;
    let cal = simulated_calibration(cfg, seed)?;
    Ok(ThresholdReport {
        config: cfg.clone(),
        seed,
        gamma_order_violations: cal.thresholds.gamma_order_violations(),
        grid: cal.grid,
        kernel: cal.kernel,
        table: cal.thresholds,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionCount {
    pub p: usize,
    pub q: ExogOrder,
    pub count: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepReport {
    pub config: ExperimentConfig,
    pub seed: u64,
    /// How often each cell had the minimum AIC.
    pub selections: Vec<SelectionCount>,
    pub failures: usize,
    /// Full table of the first replication.
    pub first: Option<SweepTable>,
}

impl SweepReport {
    /// Fraction of successful replications selecting AR order `p`.
    pub fn p_frequency(&self, p: usize) -> f64 {
        let total: usize = self.selections.iter().map(|s| s.count).sum();
        let hits: usize = self.selections.iter().filter(|s| s.p == p).map(|s| s.count).sum();
        hits as f64 / total.max(1) as f64
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("p,q,count\n");
        for c in &self.selections {
            let _ = writeln!(s, "{},{},{}", c.p, c.q, c.count);
        }
        s
    }
}

/// Model-selection frequencies over simulated series.
pub fn run_fit_sweep(cfg: &ExperimentConfig, seed: u64) -> Result<SweepReport> {
    cfg.validate()?;
    let sweep = cfg.sweep()?;
    let length = sweep.length.expect("validated");
    let model = cfg.model()?;
    let exog = cfg.exogenous()?;
    let reps = cfg.replications()?;
    let opts = FitOptions::default();
    let tables: Vec<Option<SweepTable>> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let run = || -> Result<SweepTable> {
                let data = simulate_process(model, exog, length, cfg.burn_in, replication_seed(seed, 0, r as u64))?;
                inference::model_selection_sweep(&data, &sweep.p, &sweep.q, &opts)
            };
            run().map_err(|e| log::warn!("sweep replication {r} failed: {e}")).ok()
        })
        .collect();
    let mut counts: BTreeMap<(usize, ExogOrder), usize> = BTreeMap::new();
    for p in &sweep.p {
        for q in &sweep.q {
            counts.insert((*p, *q), 0);
        }
    }
    let mut failures = 0;
    for t in &tables {
        match t.as_ref().and_then(|t| t.best_cell()) {
            Some(c) => *counts.entry((c.p, c.q)).or_default() += 1,
            None => failures += 1,
        }
    }
    Ok(SweepReport {
        config: cfg.clone(),
        seed,
        selections: counts.into_iter().map(|((p, q), count)| SelectionCount { p, q, count }).collect(),
        failures,
        first: tables.into_iter().next().flatten(),
    })
}
