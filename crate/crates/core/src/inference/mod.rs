//! Conditional maximum-likelihood fitting of the Beta AR model.
//!
//! The first `l0 = max(p, q)` observations are held fixed and the product of
//! Beta densities of the remaining ones is maximized over
//! `(phi0, phi, psi, log tau)`. Observations on the boundary are clamped to
//! the model's `x_clamp` before the density is evaluated.

pub mod detrend;
pub mod optim;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{digamma, ln_gamma};

use crate::error::{Error, Result};
use crate::model::{inverse_logit, w_transform, x_link, ExogOrder, GBetaArModel, SeriesPair};

pub use detrend::{detrend, DetrendModel};
use optim::Tolerance;

/// Optimizer settings for [`fit`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Relative log-likelihood change that ends the search.
    pub rel_tol: f64,
    pub max_iter: usize,
    /// Condition on this many leading observations instead of the model's
    /// own lag depth (must be at least the lag depth). Sweeps use it to put
    /// every cell on the same effective sample.
    pub condition_from: Option<usize>,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { rel_tol: 1e-9, max_iter: 500, condition_from: None }
    }
}

/// Precomputed regressors and log terms of the conditional likelihood.
struct Design {
    /// Row-major `n_eff x k` regressors `(1, x_link lags, w lags)`.
    z: Vec<f64>,
    k: usize,
    log_x: Vec<f64>,
    log_1mx: Vec<f64>,
}

impl Design {
    fn build(model: &GBetaArModel, data: &SeriesPair, start: usize) -> Design {
        let p = model.p();
        let nq = model.psi.len();
        let k = 1 + p + nq;
        let n = data.len();
        let mut z = Vec::with_capacity((n - start) * k);
        let mut log_x = Vec::with_capacity(n - start);
        let mut log_1mx = Vec::with_capacity(n - start);
        for t in start..n {
            z.push(1.0);
            for i in 1..=p {
                z.push(x_link(data.x[t - i], model.x_clamp));
            }
            for j in 0..nq {
                z.push(w_transform(data.w[t - j], model.w_clamp));
            }
            let xc = model.x_clamp.apply(data.x[t]);
            log_x.push(xc.ln());
            log_1mx.push((1.0 - xc).ln());
        }
        Design { z, k, log_x, log_1mx }
    }

    fn rows(&self) -> usize {
        self.log_x.len()
    }

    fn row(&self, t: usize) -> &[f64] {
        &self.z[t * self.k..(t + 1) * self.k]
    }

    /// Negative log-likelihood at `theta = (beta, log tau)`; fills `grad`
    /// when given.
    fn nll(&self, theta: &[f64], mut grad: Option<&mut [f64]>) -> f64 {
        let k = self.k;
        let log_tau = theta[k];
        let tau = log_tau.exp();
        if !(tau > 0.0 && tau.is_finite()) {
            return f64::INFINITY;
        }
        if let Some(g) = grad.as_deref_mut() {
            g.fill(0.0);
        }
        let lg_tau = ln_gamma(tau);
        let dg_tau = digamma(tau);
        let mut total = 0.0;
        for t in 0..self.rows() {
            let row = self.row(t);
            let eta: f64 = row.iter().zip(&theta[..k]).map(|(z, b)| z * b).sum();
            let mu = inverse_logit(eta);
            let a = tau * mu;
            let b = tau * (1.0 - mu);
            if !(a > 0.0 && b > 0.0 && mu < 1.0) {
                return f64::INFINITY;
            }
            let (lx, l1x) = (self.log_x[t], self.log_1mx[t]);
            total += lg_tau - ln_gamma(a) - ln_gamma(b) + (a - 1.0) * lx + (b - 1.0) * l1x;
            if let Some(g) = grad.as_deref_mut() {
                let (da, db) = (digamma(a), digamma(b));
                let d_eta = tau * mu * (1.0 - mu) * (db - da + lx - l1x);
                for (gj, zj) in g[..k].iter_mut().zip(row) {
                    *gj -= d_eta * zj;
                }
                g[k] -= tau * (dg_tau - mu * da - (1.0 - mu) * db + mu * lx + (1.0 - mu) * l1x);
            }
        }
        if total.is_finite() {
            -total
        } else {
            f64::INFINITY
        }
    }
}

fn check_fit_data(model: &GBetaArModel, data: &SeriesPair, start: usize) -> Result<()> {
    if data.x.len() != data.w.len() {
        return Err(Error::InvalidParameter("x and w lengths differ".into()));
    }
    if start < model.lag_depth() {
        return Err(Error::InvalidParameter(format!(
            "conditioning start {start} is below the lag depth {}",
            model.lag_depth()
        )));
    }
    if data.len() <= start {
        return Err(Error::InsufficientData(format!(
            "need more than {start} observations, got {}",
            data.len()
        )));
    }
    if let Some(v) = data.x.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::Domain(format!("observation {v} outside [0, 1]")));
    }
    Ok(())
}

fn pack(model: &GBetaArModel) -> Vec<f64> {
    let mut theta = Vec::with_capacity(model.n_params());
    theta.push(model.phi0);
    theta.extend(&model.phi);
    theta.extend(&model.psi);
    theta.push(model.tau.ln());
    theta
}

fn unpack(template: &GBetaArModel, theta: &[f64]) -> GBetaArModel {
    let p = template.p();
    let nq = template.psi.len();
    GBetaArModel {
        phi0: theta[0],
        phi: theta[1..1 + p].to_vec(),
        psi: theta[1 + p..1 + p + nq].to_vec(),
        tau: theta[1 + p + nq].exp(),
        ..template.clone()
    }
}

/// `-sum_{t >= l0} log Beta(X_t; tau mu_t, tau (1 - mu_t))`.
///
/// Returns `+inf` for inadmissible parameters (non-positive `tau` or a
/// degenerate mean).
pub fn negative_loglik(model: &GBetaArModel, data: &SeriesPair) -> Result<f64> {
    negative_loglik_from(model, data, model.lag_depth())
}

/// [`negative_loglik`] conditioning on the first `start` observations.
pub fn negative_loglik_from(model: &GBetaArModel, data: &SeriesPair, start: usize) -> Result<f64> {
    if !(model.tau > 0.0 && model.tau.is_finite()) {
        return Ok(f64::INFINITY);
    }
    check_fit_data(model, data, start)?;
    let design = Design::build(model, data, start);
    Ok(design.nll(&pack(model), None))
}

/// Gradient of [`negative_loglik`] with respect to
/// `(phi0, phi, psi, log tau)`.
pub fn negative_loglik_gradient(model: &GBetaArModel, data: &SeriesPair) -> Result<Vec<f64>> {
    check_fit_data(model, data, model.lag_depth())?;
    let design = Design::build(model, data, model.lag_depth());
    let theta = pack(model);
    let mut g = vec![0.0; theta.len()];
    design.nll(&theta, Some(&mut g));
    Ok(g)
}

/// Conditional means `mu_t` for `t >= start`.
pub fn conditional_means(model: &GBetaArModel, data: &SeriesPair, start: usize) -> Result<Vec<f64>> {
    check_fit_data(model, data, start)?;
    Ok((start..data.len()).map(|t| inverse_logit(model.eta_at(&data.x, &data.w, t))).collect())
}

/// `(1 / n_eff) sum_{t >= start} |X_t - mu_t|`.
pub fn mean_absolute_error(model: &GBetaArModel, data: &SeriesPair, start: usize) -> Result<f64> {
    let mu = conditional_means(model, data, start)?;
    let n = mu.len() as f64;
    Ok(mu.iter().zip(&data.x[start..]).map(|(m, x)| (x - m).abs()).sum::<f64>() / n)
}

/// `-2 loglik + 2 k` with `k = p + (q + 1) + 2`.
pub fn aic(loglik: f64, n_params: usize) -> f64 {
    -2.0 * loglik + 2.0 * n_params as f64
}

/// Outcome of a conditional maximum-likelihood fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: GBetaArModel,
    pub loglik: f64,
    pub aic: f64,
    pub mae: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Number of leading observations held fixed.
    pub start: usize,
    pub n_eff: usize,
}

/// Least-squares start: regress `logit(X_t*)` on the regressors, then a
/// method-of-moments `tau` from `Var(X | mu) = mu (1 - mu) / (1 + tau)`.
fn starting_values(template: &GBetaArModel, data: &SeriesPair, design: &Design) -> Vec<f64> {
    let n = design.rows();
    let k = design.k;
    let zmat = DMatrix::from_row_slice(n, k, &design.z);
    let y = DVector::from_iterator(n, (0..n).map(|t| design.log_x[t] - design.log_1mx[t]));
    let beta = zmat
        .clone()
        .svd(true, true)
        .solve(&y, 1e-12)
        .ok()
        .filter(|b| b.iter().all(|v| v.is_finite()))
        .map(|b| b.iter().copied().collect::<Vec<_>>())
        .unwrap_or_else(|| vec![0.0; k]);
    let start = data.len() - n;
    let (mut num, mut den) = (0.0, 0.0);
    for t in 0..n {
        let eta: f64 = design.row(t).iter().zip(&beta).map(|(z, b)| z * b).sum();
        let mu = inverse_logit(eta);
        num += mu * (1.0 - mu);
        den += (template.x_clamp.apply(data.x[start + t]) - mu).powi(2);
    }
    let tau = if den > 0.0 { (num / den - 1.0).clamp(1.0, 1e6) } else { 10.0 };
    let mut theta = beta;
    theta.push(tau.ln());
    theta
}

/// Fits a model with AR order `p` and exogenous order `exog`.
pub fn fit(p: usize, exog: ExogOrder, data: &SeriesPair, opts: &FitOptions) -> Result<FitResult> {
    let template = GBetaArModel::zeros(p, exog);
    fit_with_template(&template, data, opts)
}

/// Fits using the orders and clamps of `template`; its coefficient values
/// are ignored.
pub fn fit_with_template(template: &GBetaArModel, data: &SeriesPair, opts: &FitOptions) -> Result<FitResult> {
    let p = template.p();
    let nq = template.psi.len();
    let lag_depth = template.lag_depth();
    let start = opts.condition_from.unwrap_or(lag_depth);
    check_fit_data(template, data, start)?;
    let hard_min = lag_depth + p + nq + 3;
    if data.len() < hard_min {
        return Err(Error::InsufficientData(format!(
            "need at least {hard_min} observations for p = {p}, {nq} exogenous terms; got {}",
            data.len()
        )));
    }
    if data.len() < 10 * template.n_params() {
        log::warn!(
            "only {} observations for {} parameters; estimates will be unstable",
            data.len(),
            template.n_params()
        );
    }
    let first = data.x[start];
    if data.x[start..].iter().all(|v| *v == first) {
        return Err(Error::InsufficientData("constant series cannot be fitted".into()));
    }

    let design = Design::build(template, data, start);
    let theta0 = starting_values(template, data, &design);
    let f0 = design.nll(&theta0, None);
    let tol = Tolerance { rel_f: opts.rel_tol, max_iter: opts.max_iter };

    let quasi_newton = optim::bfgs(|x, g| design.nll(x, Some(g)), &theta0, tol);
    let (theta, iterations, converged) = match quasi_newton {
        Some(m) if m.converged && m.f.is_finite() => (m.x, m.iterations, true),
        other => {
            let from = other.as_ref().filter(|m| m.f.is_finite()).map_or(theta0.clone(), |m| m.x.clone());
            let used = other.as_ref().map_or(0, |m| m.iterations);
            let simplex = optim::nelder_mead(|x| design.nll(x, None), &from, tol);
            (simplex.x, used + simplex.iterations, simplex.converged)
        }
    };
    let theta = if design.nll(&theta, None) <= f0 { theta } else { theta0 };
    if !design.nll(&theta, None).is_finite() {
        return Err(Error::Numerical("likelihood is not finite at any visited point".into()));
    }
    let model = unpack(template, &theta);
    let loglik = -negative_loglik_from(&model, data, start)?;
    let mae = mean_absolute_error(&model, data, start)?;
    Ok(FitResult {
        aic: aic(loglik, model.n_params()),
        model,
        loglik,
        mae,
        converged,
        iterations,
        start,
        n_eff: data.len() - start,
    })
}

/// Numerical-Hessian standard errors of `(phi0, phi, psi, tau)`.
///
/// The Hessian of the negative log-likelihood in `(.., log tau)` comes from
/// central differences of the analytic gradient; the `tau` entry is mapped
/// back with the delta method.
pub fn standard_errors(model: &GBetaArModel, data: &SeriesPair, start: usize) -> Result<Vec<f64>> {
    check_fit_data(model, data, start)?;
    let design = Design::build(model, data, start);
    let theta = pack(model);
    let n = theta.len();
    let mut hess = DMatrix::<f64>::zeros(n, n);
    let mut gp = vec![0.0; n];
    let mut gm = vec![0.0; n];
    for j in 0..n {
        let h = 1e-5 * theta[j].abs().max(1.0);
        let mut tp = theta.clone();
        let mut tm = theta.clone();
        tp[j] += h;
        tm[j] -= h;
        design.nll(&tp, Some(&mut gp));
        design.nll(&tm, Some(&mut gm));
        for i in 0..n {
            hess[(i, j)] = (gp[i] - gm[i]) / (2.0 * h);
        }
    }
    let hess = crate::linalg::symmetrize(&hess);
    let cov = hess
        .try_inverse()
        .ok_or_else(|| Error::Numerical("observed information is singular".into()))?;
    let mut se: Vec<f64> = (0..n).map(|i| cov[(i, i)].max(0.0).sqrt()).collect();
    se[n - 1] *= model.tau;
    Ok(se)
}

/// One cell of a model-selection sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepCell {
    pub p: usize,
    pub q: ExogOrder,
    pub result: std::result::Result<FitResult, String>,
}

/// Fits for every `(p, q)` combination.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepTable {
    pub cells: Vec<SweepCell>,
    /// Index of the minimum-AIC cell among successful fits.
    pub best: Option<usize>,
    pub start: usize,
}

impl SweepTable {
    pub fn best_cell(&self) -> Option<&SweepCell> {
        self.best.map(|i| &self.cells[i])
    }

    pub fn best_fit(&self) -> Option<&FitResult> {
        self.best_cell().and_then(|c| c.result.as_ref().ok())
    }

    /// CSV table with one row per cell.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("p,q,aic,mae,loglik,converged,error\n");
        for c in &self.cells {
            match &c.result {
                Ok(r) => s.push_str(&format!("{},{},{},{},{},{},\n", c.p, c.q, r.aic, r.mae, r.loglik, r.converged)),
                Err(e) => s.push_str(&format!("{},{},,,,,\"{}\"\n", c.p, c.q, e.replace('"', "'"))),
            }
        }
        s
    }
}

fn argmin_aic(cells: &[SweepCell]) -> Option<usize> {
    cells
        .iter()
        .enumerate()
        .filter_map(|(i, c)| c.result.as_ref().ok().map(|r| (i, r.aic)))
        .filter(|(_, a)| a.is_finite())
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(i, _)| i)
}

/// Fits every `(p, q)` cell on a common effective sample: all cells
/// condition on the largest lag depth in the sweep so their AICs are
/// comparable. Failed cells are recorded and the sweep continues.
pub fn model_selection_sweep(
    data: &SeriesPair,
    p_range: &[usize],
    q_range: &[ExogOrder],
    opts: &FitOptions,
) -> Result<SweepTable> {
    if p_range.is_empty() || q_range.is_empty() {
        return Err(Error::InvalidParameter("sweep ranges must be non-empty".into()));
    }
    let start = p_range
        .iter()
        .flat_map(|p| q_range.iter().map(move |q| (*p).max(q.max_lag())))
        .max()
        .unwrap_or(0)
        .max(opts.condition_from.unwrap_or(0));
    let cell_opts = FitOptions { condition_from: Some(start), ..*opts };
    let grid: Vec<(usize, ExogOrder)> = p_range.iter().flat_map(|p| q_range.iter().map(move |q| (*p, *q))).collect();
    let cells: Vec<SweepCell> = grid
        .par_iter()
        .map(|(p, q)| SweepCell {
            p: *p,
            q: *q,
            result: fit(*p, *q, data, &cell_opts).map_err(|e| e.to_string()),
        })
        .collect();
    let best = argmin_aic(&cells);
    Ok(SweepTable { cells, best, start })
}
