//! Additive trend and monthly-seasonality adjustment.
//!
//! `value = intercept + slope * (year - year_origin) + month_effect[month] + residual`
//! with December as the baseline month. The adjusted series is the residual;
//! `residual_offset` (the mean raw value of the fitting window) is a level
//! that downstream code may add back so adjusted values live on the original
//! scale.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetrendModel {
    pub intercept: f64,
    pub year_slope: f64,
    /// Mean year of the fitting window; the trend is linear in `year - year_origin`.
    pub year_origin: f64,
    /// Effects for January..November relative to December.
    pub month_effects: [f64; 11],
    pub residual_offset: f64,
}

fn check_calendar(n: usize, years: &[i32], months: &[u32]) -> Result<()> {
    if years.len() != n || months.len() != n {
        return Err(Error::InvalidParameter(format!(
            "values, years and months must have equal lengths ({n}, {}, {})",
            years.len(),
            months.len()
        )));
    }
    if let Some((i, m)) = months.iter().enumerate().find(|(_, m)| !(1..=12).contains(*m)) {
        return Err(Error::Domain(format!("month {m} at position {i} is outside 1..12")));
    }
    Ok(())
}

impl DetrendModel {
    pub fn month_effect(&self, month: u32) -> f64 {
        if month == 12 {
            0.0
        } else {
            self.month_effects[(month - 1) as usize]
        }
    }

    /// Fitted trend plus seasonality at one calendar point.
    pub fn fitted(&self, year: i32, month: u32) -> f64 {
        self.intercept + self.year_slope * (year as f64 - self.year_origin) + self.month_effect(month)
    }

    /// `value - fitted` for each point.
    pub fn adjust(&self, values: &[f64], years: &[i32], months: &[u32]) -> Result<Vec<f64>> {
        check_calendar(values.len(), years, months)?;
        Ok(values.iter().zip(years).zip(months).map(|((v, y), m)| v - self.fitted(*y, *m)).collect())
    }

    /// Inverse of [`DetrendModel::adjust`].
    pub fn restore(&self, adjusted: &[f64], years: &[i32], months: &[u32]) -> Result<Vec<f64>> {
        check_calendar(adjusted.len(), years, months)?;
        Ok(adjusted.iter().zip(years).zip(months).map(|((v, y), m)| v + self.fitted(*y, *m)).collect())
    }
}

/// Least-squares fit of `values` on a linear year term and month dummies.
///
/// Fails when the design is rank deficient, e.g. a single year of data or a
/// calendar month that never occurs.
pub fn detrend(values: &[f64], years: &[i32], months: &[u32]) -> Result<(DetrendModel, Vec<f64>)> {
    let n = values.len();
    check_calendar(n, years, months)?;
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::Domain(format!("non-finite value {v}")));
    }
    const K: usize = 13;
    if n < K {
        return Err(Error::InsufficientData(format!("need at least {K} observations to detrend, got {n}")));
    }
    let year_origin = years.iter().map(|y| *y as f64).sum::<f64>() / n as f64;
    let design = DMatrix::from_fn(n, K, |t, j| match j {
        0 => 1.0,
        1 => years[t] as f64 - year_origin,
        _ => {
            if months[t] as usize == j - 1 {
                1.0
            } else {
                0.0
            }
        }
    });
    let svd = design.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if smin <= 1e-10 * smax {
        let mut missing: Vec<u32> = (1..=11).filter(|m| !months.contains(m)).collect();
        if !months.contains(&12) {
            missing.push(12);
        }
        let distinct_years = {
            let mut y = years.to_vec();
            y.sort_unstable();
            y.dedup();
            y.len()
        };
        return Err(Error::Numerical(format!(
            "trend/season design is rank deficient (distinct years: {distinct_years}, missing months: {missing:?})"
        )));
    }
    let y = DVector::from_column_slice(values);
    let beta = svd
        .solve(&y, 1e-14)
        .map_err(|e| Error::Numerical(format!("least squares failed: {e}")))?;
    let mut month_effects = [0.0; 11];
    month_effects.copy_from_slice(&beta.as_slice()[2..]);
    let model = DetrendModel {
        intercept: beta[0],
        year_slope: beta[1],
        year_origin,
        month_effects,
        residual_offset: values.iter().sum::<f64>() / n as f64,
    };
    let adjusted = model.adjust(values, years, months)?;
    Ok((model, adjusted))
}
