//! Monthly-series workflow: detrend, model-selection sweep, calibration on
//! the training window and monitoring of the remaining months.
//!
//! Input CSV: a `date` column (`YYYY-MM`, consecutive months), a `value`
//! column in `[0, 1]` and optionally exogenous columns.

use std::fmt::Write as _;
use std::io::Read;

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, ReferenceSpec};
use super::simulation::monitor_config;
use crate::error::{Error, Result};
use crate::inference::{self, DetrendModel, FitOptions, SweepTable};
use crate::model::{ExogOrder, SeriesPair};
use crate::monitor::{self, DetectionReport, Reference};
use crate::stat::{CovKernel, QuantileGrid};
use crate::threshold::ThresholdTable;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct YearMonth {
    pub year: i32,
    pub month: u32,
}

impl YearMonth {
    pub fn parse(s: &str) -> Result<Self> {
        let bad = || Error::Domain(format!("date '{s}' is not YYYY-MM"));
        let (y, m) = s.trim().split_once('-').ok_or_else(bad)?;
        if y.len() != 4 || m.len() != 2 {
            return Err(bad());
        }
        let year: i32 = y.parse().map_err(|_| bad())?;
        let month: u32 = m.parse().map_err(|_| bad())?;
        if !(1..=12).contains(&month) {
            return Err(bad());
        }
        Ok(Self { year, month })
    }

    pub fn next(self) -> Self {
        if self.month == 12 {
            Self { year: self.year + 1, month: 1 }
        } else {
            Self { year: self.year, month: self.month + 1 }
        }
    }
}

impl std::fmt::Display for YearMonth {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

/// Parsed monthly input.
#[derive(Debug, Clone, PartialEq)]
pub struct MonthlySeries {
    pub dates: Vec<YearMonth>,
    pub values: Vec<f64>,
    /// `(column name, values)` for every exogenous column.
    pub exogenous: Vec<(String, Vec<f64>)>,
}

impl MonthlySeries {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Reads and validates CSV text. Row numbers in errors count the header
    /// as row 1.
    pub fn from_reader(reader: impl Read) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        let find = |name: &str| headers.iter().position(|h| h.eq_ignore_ascii_case(name));
        let date_col = find("date").ok_or(Error::Schema { row: 1, message: "missing 'date' column".into() })?;
        let value_col = find("value").ok_or(Error::Schema { row: 1, message: "missing 'value' column".into() })?;
        let exog_cols: Vec<usize> = (0..headers.len()).filter(|i| *i != date_col && *i != value_col).collect();
        let mut series = MonthlySeries {
            dates: Vec::new(),
            values: Vec::new(),
            exogenous: exog_cols.iter().map(|i| (headers[*i].to_string(), Vec::new())).collect(),
        };
        for (i, rec) in rdr.records().enumerate() {
            let row = i + 2;
            let rec = rec.map_err(|e| Error::Schema { row, message: e.to_string() })?;
            let date = YearMonth::parse(&rec[date_col]).map_err(|e| Error::Schema { row, message: e.to_string() })?;
            if let Some(prev) = series.dates.last() {
                if date != prev.next() {
                    return Err(Error::Schema {
                        row,
                        message: format!("date {date} does not follow {prev} by one month"),
                    });
                }
            }
            let value: f64 = rec[value_col]
                .parse()
                .map_err(|_| Error::Schema { row, message: format!("value '{}' is not a number", &rec[value_col]) })?;
            if !(0.0..=1.0).contains(&value) {
                return Err(Error::Schema { row, message: format!("value {value} outside [0, 1]") });
            }
            for (slot, col) in series.exogenous.iter_mut().zip(&exog_cols) {
                let v: f64 = rec[*col].parse().map_err(|_| Error::Schema {
                    row,
                    message: format!("{} '{}' is not a number", slot.0, &rec[*col]),
                })?;
                if !v.is_finite() {
                    return Err(Error::Schema { row, message: format!("{} is not finite", slot.0) });
                }
                slot.1.push(v);
            }
            series.dates.push(date);
            series.values.push(value);
        }
        if series.is_empty() {
            return Err(Error::Schema { row: 2, message: "no data rows".into() });
        }
        Ok(series)
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self> {
        let file = std::fs::File::open(path)
            .map_err(|e| Error::Config(format!("cannot open {}: {e}", path.display())))?;
        Self::from_reader(file)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("date,value");
        for (name, _) in &self.exogenous {
            let _ = write!(s, ",{name}");
        }
        s.push('\n');
        for t in 0..self.len() {
            let _ = write!(s, "{},{}", self.dates[t], self.values[t]);
            for (_, col) in &self.exogenous {
                let _ = write!(s, ",{}", col[t]);
            }
            s.push('\n');
        }
        s
    }

    /// The exogenous column to model with, if any.
    pub fn exog(&self, name: Option<&str>) -> Result<Option<&[f64]>> {
        match (name, self.exogenous.len()) {
            (Some(n), _) => self
                .exogenous
                .iter()
                .find(|(c, _)| c == n)
                .map(|(_, v)| Some(v.as_slice()))
                .ok_or_else(|| Error::Config(format!("exogenous column '{n}' not found"))),
            (None, 0) => Ok(None),
            (None, 1) => Ok(Some(self.exogenous[0].1.as_slice())),
            (None, _) => Err(Error::Config("several exogenous columns; set pipeline.exog_column".into())),
        }
    }

    pub fn years(&self) -> Vec<i32> {
        self.dates.iter().map(|d| d.year).collect()
    }

    pub fn months(&self) -> Vec<u32> {
        self.dates.iter().map(|d| d.month).collect()
    }
}

/// Trend/season adjustment applied to a whole series using a fit on the
/// training window. The modelling series is `adjusted + residual_offset`,
/// clipped to `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreparedSeries {
    pub detrend: DetrendModel,
    pub adjusted: Vec<f64>,
    pub modelled: Vec<f64>,
    /// Number of modelled values clipped into `[0, 1]`.
    pub clipped: usize,
}

pub fn prepare_series(series: &MonthlySeries, m: usize) -> Result<PreparedSeries> {
    let years = series.years();
    let months = series.months();
    let (detrend, _) = inference::detrend(&series.values[..m], &years[..m], &months[..m])?;
    let adjusted = detrend.adjust(&series.values, &years, &months)?;
    let mut clipped = 0;
    let modelled = adjusted
        .iter()
        .map(|a| {
            let v = a + detrend.residual_offset;
            if (0.0..=1.0).contains(&v) {
                v
            } else {
                clipped += 1;
                v.clamp(0.0, 1.0)
            }
        })
        .collect();
    if clipped > 0 {
        log::warn!("{clipped} adjusted values fell outside [0, 1] and were clipped");
    }
    Ok(PreparedSeries { detrend, adjusted, modelled, clipped })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedRow {
    pub date: YearMonth,
    pub observed: f64,
    /// Conditional mean mapped back to the original scale; absent for the
    /// conditioning rows.
    pub fitted: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatedDetection {
    pub report: DetectionReport,
    pub alarm_date: Option<YearMonth>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineReport {
    pub config: ExperimentConfig,
    pub seed: u64,
    pub m: usize,
    pub training_end: YearMonth,
    pub prepared: PreparedSeries,
    pub sweep: SweepTable,
    pub grid: QuantileGrid,
    pub kernel: CovKernel,
    pub thresholds: ThresholdTable,
    pub detections: Vec<DatedDetection>,
    pub fitted: Vec<FittedRow>,
}

impl PipelineReport {
    pub fn fitted_csv(&self) -> String {
        let mut s = String::from("date,observed,fitted\n");
        for r in &self.fitted {
            let _ = writeln!(s, "{},{},{}", r.date, r.observed, r.fitted.map_or(String::new(), |v| v.to_string()));
        }
        s
    }

    pub fn detections_csv(&self) -> String {
        let mut s = String::from("gamma,alpha,threshold,alarm_index,alarm_date,horizon_end_index\n");
        for d in &self.detections {
            let r = &d.report;
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                r.gamma,
                r.alpha,
                r.threshold,
                r.alarm_index.map_or(String::new(), |k| k.to_string()),
                d.alarm_date.map_or(String::new(), |d| d.to_string()),
                r.horizon_end_index
            );
        }
        s
    }
}

/// Runs the monthly workflow on `series` with the settings of a
/// `monitor_run` config.
pub fn run_real_pipeline(cfg: &ExperimentConfig, series: &MonthlySeries, seed: u64) -> Result<PipelineReport> {
    cfg.validate()?;
    let pipe = cfg.pipeline()?;
    let sweep_cfg = cfg.sweep()?;
    let mon = cfg.monitoring()?;
    let training_end = YearMonth::parse(&pipe.training_end)?;
    let m = series
        .dates
        .iter()
        .position(|d| *d == training_end)
        .ok_or_else(|| Error::Config(format!("training_end {training_end} is not in the data")))?
        + 1;
    if !mon.m.is_empty() && mon.m != [m] {
        return Err(Error::Config(format!("monitoring.m = {:?} disagrees with the training window ({m})", mon.m)));
    }
    if m >= series.len() {
        return Err(Error::Config("no observations after the training window".into()));
    }

    let prepared = prepare_series(series, m)?;
    let exog = series.exog(pipe.exog_column.as_deref())?;
    let full = match exog {
        Some(w) => SeriesPair::new(prepared.modelled.clone(), w.to_vec())?,
        None => SeriesPair::without_exog(prepared.modelled.clone())?,
    };
    let q_range: Vec<ExogOrder> = if exog.is_some() {
        sweep_cfg.q.clone()
    } else {
        let kept: Vec<ExogOrder> = sweep_cfg.q.iter().copied().filter(|q| *q == ExogOrder::None).collect();
        if kept.len() < sweep_cfg.q.len() {
            log::warn!("no exogenous column; sweeping only q = none");
        }
        if kept.is_empty() {
            vec![ExogOrder::None]
        } else {
            kept
        }
    };
    let training = full.slice(0, m);
    let sweep = inference::model_selection_sweep(&training, &sweep_cfg.p, &q_range, &FitOptions::default())?;
    let best = sweep
        .best_fit()
        .ok_or_else(|| Error::Numerical("every cell of the model-selection sweep failed".into()))?;

    let years = series.years();
    let months = series.months();
    let start = best.model.lag_depth();
    let means = inference::conditional_means(&best.model, &full, start)?;
    let fitted = (0..series.len())
        .map(|t| FittedRow {
            date: series.dates[t],
            observed: series.values[t],
            fitted: (t >= start).then(|| {
                means[t - start] - prepared.detrend.residual_offset
                    + prepared.detrend.fitted(years[t], months[t])
            }),
        })
        .collect();

    let reference = match mon.reference {
        ReferenceSpec::Training => Reference::Training,
        ReferenceSpec::Simulated { .. } => {
            return Err(Error::Config("monitor_run calibrates on the data; use reference.source = \"training\"".into()))
        }
    };
    let train_x = &prepared.modelled[..m];
    let cal = monitor::calibrate(train_x, &monitor_config(cfg, seed)?, &reference)?;
    let mut detections = Vec::new();
    for g in &mon.gammas {
        for a in &mon.alphas {
            let plan = cal.plan(train_x, *g, *a)?;
            let report = monitor::run_to_completion(&plan, &prepared.modelled[m..], None)?;
            let alarm_date = report.alarm_index.map(|k| series.dates[k - 1]);
            detections.push(DatedDetection { report, alarm_date });
        }
    }
    Ok(PipelineReport {
        config: cfg.clone(),
        seed,
        m,
        training_end,
        prepared,
        sweep,
        grid: cal.grid,
        kernel: cal.kernel,
        thresholds: cal.thresholds,
        detections,
        fitted,
    })
}
