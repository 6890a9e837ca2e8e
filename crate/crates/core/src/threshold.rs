//! Monte-Carlo thresholds for the weighted sup statistic.
//!
//! Under no change the detector converges to `D_C(s) = B_C(s) - s B_C(1)`,
//! where `B_C` is a d-variate Brownian motion with covariance `Gamma`. One
//! replication draws `(N + 1) m_sim` i.i.d. `N(0, Gamma)` vectors, forms the
//! scaled partial sums `B_C(k / m_sim)` and records
//! `sup_k rho^2(k / m_sim) D_C^T A D_C` over `k = m_sim + 1 ..= (N + 1) m_sim`.
//!
//! `N(0, Gamma)` draws are `R z` with `R` the symmetric square root of
//! `Gamma` and `z` standard normal, so the quadratic form is evaluated as
//! `y^T (R A R) y / m_sim` on the partial sums `y` of `z`.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::rng;
use crate::stat::{self, CovKernel};

/// Inputs of a threshold simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdRequest {
    pub kernel: CovKernel,
    pub n_ratio: f64,
    pub gammas: Vec<f64>,
    pub alphas: Vec<f64>,
    pub delta: f64,
    #[serde(with = "linalg::rows")]
    pub a_matrix: DMatrix<f64>,
    pub m_sim: usize,
    pub reps: usize,
    pub seed: u64,
}

impl ThresholdRequest {
    pub fn validate(&self) -> Result<()> {
        let d = self.kernel.dim();
        if !(self.n_ratio > 0.0 && self.n_ratio.is_finite()) {
            return Err(Error::InvalidParameter(format!("N must be positive, got {}", self.n_ratio)));
        }
        if self.m_sim < 100 {
            return Err(Error::InvalidParameter(format!("m_sim must be at least 100, got {}", self.m_sim)));
        }
        if self.reps == 0 {
            return Err(Error::InvalidParameter("reps must be positive".into()));
        }
        if self.reps < 1000 {
            log::warn!("only {} replications; thresholds will be noisy", self.reps);
        }
        if self.gammas.is_empty() || self.gammas.iter().any(|g| !(0.0..0.5).contains(g)) {
            return Err(Error::InvalidParameter("gammas must be non-empty and lie in [0, 0.5)".into()));
        }
        if self.alphas.is_empty() || self.alphas.iter().any(|a| !(*a > 0.0 && *a < 1.0)) {
            return Err(Error::InvalidParameter("alphas must be non-empty and lie in (0, 1)".into()));
        }
        if !(self.delta > 0.0) {
            return Err(Error::InvalidParameter("delta must be positive".into()));
        }
        stat::check_spd(&self.a_matrix, d)?;
        let scale = self.kernel.gamma.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if !linalg::is_symmetric(&self.kernel.gamma, 1e-12)
            || linalg::min_eigenvalue(&self.kernel.gamma) < -1e-10 * scale.max(1.0)
        {
            return Err(Error::Numerical("kernel is not PSD; run the PSD repair first".into()));
        }
        Ok(())
    }

    /// Last simulated index `floor((N + 1) m_sim)`.
    pub fn horizon(&self) -> usize {
        stat::horizon_end(self.m_sim, self.n_ratio)
    }
}

/// Walks one replication, calling `visit(k, y)` for every
/// `k = m_sim + 1 ..= horizon` with `y = Z_k - (k / m_sim) Z_{m_sim}` the
/// centred partial sum of standard normals.
fn replicate<R: Rng>(rng: &mut R, d: usize, m: usize, horizon: usize, mut visit: impl FnMut(usize, &[f64])) {
    let mut z = vec![0.0; d];
    for _ in 0..m {
        for zi in z.iter_mut() {
            *zi += rng.sample::<f64, _>(StandardNormal);
        }
    }
    let zm = z.clone();
    let mut y = vec![0.0; d];
    for k in (m + 1)..=horizon {
        for zi in z.iter_mut() {
            *zi += rng.sample::<f64, _>(StandardNormal);
        }
        let s = k as f64 / m as f64;
        for i in 0..d {
            y[i] = z[i] - s * zm[i];
        }
        visit(k, &y);
    }
}

/// Sup statistics for every requested gamma, `result[g][rep]`.
///
/// All gammas share the same Gaussian paths.
pub fn simulate_sup_stats(req: &ThresholdRequest) -> Result<Vec<Vec<f64>>> {
    req.validate()?;
    let d = req.kernel.dim();
    let root = linalg::symmetric_sqrt(&req.kernel.gamma);
    let form = linalg::symmetrize(&(&root * &req.a_matrix * &root));
    let m = req.m_sim;
    let horizon = req.horizon();
    let inv_m = 1.0 / m as f64;
    let weights: Vec<Vec<f64>> = req
        .gammas
        .iter()
        .map(|g| {
            ((m + 1)..=horizon)
                .map(|k| {
                    let r = stat::weight(k as f64 / m as f64, *g, req.delta);
                    r * r
                })
                .collect()
        })
        .collect();

    let per_rep: Vec<Vec<f64>> = (0..req.reps)
        .into_par_iter()
        .map(|rep| {
            let mut rng = rng::substream(req.seed, rep as u64);
            let mut sups = vec![f64::NEG_INFINITY; req.gammas.len()];
            replicate(&mut rng, d, m, horizon, |k, y| {
                let q = stat::quad_form(y, &form) * inv_m;
                for (sup, w) in sups.iter_mut().zip(&weights) {
                    *sup = sup.max(w[k - m - 1] * q);
                }
            });
            sups
        })
        .collect();

    Ok((0..req.gammas.len())
        .map(|g| per_rep.iter().map(|r| r[g]).collect())
        .collect())
}

/// Sup statistic replications for a single gamma.
pub fn simulate_sup_stat(req: &ThresholdRequest, gamma: f64) -> Result<Vec<f64>> {
    let single = ThresholdRequest { gammas: vec![gamma], ..req.clone() };
    Ok(simulate_sup_stats(&single)?.remove(0))
}

/// Samples of `D_C(k / m_sim)` at the requested indices, `result[rep][j]`
/// for `ks[j]`. Uses the same random streams as [`simulate_sup_stats`].
pub fn simulate_limit_process(req: &ThresholdRequest, ks: &[usize]) -> Result<Vec<Vec<Vec<f64>>>> {
    req.validate()?;
    let d = req.kernel.dim();
    let m = req.m_sim;
    let horizon = req.horizon();
    if let Some(k) = ks.iter().find(|k| **k <= m || **k > horizon) {
        return Err(Error::InvalidParameter(format!("index {k} outside ({m}, {horizon}]")));
    }
    let root = linalg::symmetric_sqrt(&req.kernel.gamma);
    let scale = 1.0 / (m as f64).sqrt();
    Ok((0..req.reps)
        .into_par_iter()
        .map(|rep| {
            let mut rng = rng::substream(req.seed, rep as u64);
            let mut out = vec![Vec::new(); ks.len()];
            replicate(&mut rng, d, m, horizon, |k, y| {
                for (slot, want) in out.iter_mut().zip(ks) {
                    if *want == k {
                        *slot = (0..d)
                            .map(|i| (0..d).map(|j| root[(i, j)] * y[j]).sum::<f64>() * scale)
                            .collect();
                    }
                }
            });
            out
        })
        .collect())
}

/// Threshold for one `(gamma, alpha)` pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdEntry {
    pub gamma: f64,
    pub alpha: f64,
    pub c: f64,
    pub mc_se: f64,
}

/// Thresholds `c(gamma, alpha)` with Monte-Carlo standard errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdTable {
    pub gammas: Vec<f64>,
    pub alphas: Vec<f64>,
    pub entries: Vec<ThresholdEntry>,
    pub reps: usize,
}

fn same(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12
}

impl ThresholdTable {
    pub fn get(&self, gamma: f64, alpha: f64) -> Option<&ThresholdEntry> {
        self.entries.iter().find(|e| same(e.gamma, gamma) && same(e.alpha, alpha))
    }

    pub fn threshold(&self, gamma: f64, alpha: f64) -> Option<f64> {
        self.get(gamma, alpha).map(|e| e.c)
    }

    /// Cells where `c` fails to increase with gamma at fixed alpha.
    pub fn gamma_order_violations(&self) -> Vec<(f64, f64, f64)> {
        let mut gammas = self.gammas.clone();
        gammas.sort_by(f64::total_cmp);
        let mut out = Vec::new();
        for a in &self.alphas {
            for pair in gammas.windows(2) {
                if let (Some(lo), Some(hi)) = (self.threshold(pair[0], *a), self.threshold(pair[1], *a)) {
                    if hi <= lo {
                        out.push((*a, pair[0], pair[1]));
                    }
                }
            }
        }
        out
    }

    /// CSV with one row per gamma and one column per alpha.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("gamma");
        for a in &self.alphas {
            s.push_str(&format!(",{a}"));
        }
        s.push('\n');
        for g in &self.gammas {
            s.push_str(&format!("{g}"));
            for a in &self.alphas {
                let c = self.threshold(*g, *a).unwrap_or(f64::NAN);
                s.push_str(&format!(",{c}"));
            }
            s.push('\n');
        }
        s
    }
}

/// Order statistic at 1-based index `ceil(p * n)`.
pub fn upper_quantile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let idx = ((p * n as f64) - 1e-9).ceil().clamp(1.0, n as f64) as usize;
    sorted[idx - 1]
}

/// Standard error of the empirical `p`-quantile: binomial error of the
/// ECDF divided by a density estimate from neighbouring order statistics.
pub fn quantile_se(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n < 3 {
        return f64::NAN;
    }
    let idx = ((p * n as f64) - 1e-9).ceil().clamp(1.0, n as f64) as usize - 1;
    let h = ((n as f64).sqrt().ceil() as usize).max(1);
    let lo = idx.saturating_sub(h);
    let hi = (idx + h).min(n - 1);
    let spread = sorted[hi] - sorted[lo];
    if spread <= 0.0 {
        return 0.0;
    }
    let density = (hi - lo) as f64 / (n as f64 * spread);
    (p * (1.0 - p) / n as f64).sqrt() / density
}

/// Empirical `(1 - alpha)` quantiles of the simulated sup statistics.
pub fn threshold_table(req: &ThresholdRequest) -> Result<ThresholdTable> {
    let sups = simulate_sup_stats(req)?;
    Ok(table_from_samples(req, sups))
}

pub(crate) fn table_from_samples(req: &ThresholdRequest, sups: Vec<Vec<f64>>) -> ThresholdTable {
    let mut entries = Vec::new();
    for (g, mut sample) in req.gammas.iter().zip(sups) {
        sample.sort_by(f64::total_cmp);
        for a in &req.alphas {
            let p = 1.0 - a;
            entries.push(ThresholdEntry {
                gamma: *g,
                alpha: *a,
                c: upper_quantile(&sample, p),
                mc_se: quantile_se(&sample, p),
            });
        }
    }
    let table = ThresholdTable {
        gammas: req.gammas.clone(),
        alphas: req.alphas.clone(),
        entries,
        reps: req.reps,
    };
    for (a, lo, hi) in table.gamma_order_violations() {
        log::warn!("threshold not increasing in gamma at alpha = {a}: gamma {lo} -> {hi}");
    }
    table
}
